"""Time-periodic solutions near the wall via shooting, Newton and continuation.

The unknowns are the initial state ``(phi0, vartheta0)`` and the field
offset ``gamma``.  The residual is

    F(phi0, vartheta0, gamma, lam) = (phi(T) - phi0, vartheta(T) - vartheta0, vartheta0(0)),

square in ``2N + 1`` unknowns; the last component pins translations.

Newton's method uses a Newton-Picard split.  Central differences give the
Jacobian on a low-frequency subspace ``V``; on its complement the period map
is strongly contracting (high modes decay like ``exp(-kappa xi^2 T)``), so
there the Jacobian of ``F`` is replaced by ``-I``.  When ``V`` spans the
whole state space this is plain Newton with a finite-difference Jacobian.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .dynamics import ForcingModel, IntegratorConfig, State, ValidityError, WallDynamics
from .energy import WallProfile
from .params import DimensionError, InvalidParameterError, RealField, RescaledParameters

log = logging.getLogger(__name__)

MIN_STEP = 1e-6


class ContinuationStepError(RuntimeError):
    """Newton failed for this amplitude; the caller should shorten the step."""

    def __init__(self, message, residual=float("nan")):
        super().__init__(message)
        self.residual = residual


@dataclass
class PoincareSetup:
    """Everything the period map depends on besides ``(state, gamma, lam)``.

    ``forcing`` supplies the shape ``h`` and the period; its own ``lam`` and
    ``gamma`` are ignored.  ``projection_modes`` is the number of real
    Fourier basis vectors per component on which the Jacobian is formed by
    finite differences (the full space when it is at least ``N``).
    """

    wall: WallProfile
    forcing: ForcingModel
    config: IntegratorConfig
    params: RescaledParameters | None = None
    projection_modes: int = 64
    fd_step: float = 1e-5
    tolerance: float = 1e-8
    step_tolerance: float = 1e-9
    max_newton_iterations: int = 30
    max_halvings: int = 8
    stall_ratio: float = 0.5
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.params = self.params or self.wall.params
        self.n_steps = self.config.steps_for(self.forcing.period)
        if self.projection_modes < 1:
            raise InvalidParameterError("projection_modes must be positive")
        self.dynamics = WallDynamics(self.wall, self.params, dealias=self.config.dealias)

    @property
    def grid(self):
        return self.wall.grid

    @property
    def period(self) -> float:
        return self.forcing.period

    @property
    def n_unknowns(self) -> int:
        return 2 * self.grid.n_points + 1

    @property
    def pin_index(self) -> int:
        """Position of ``vartheta0(0)`` in the stacked state."""
        return self.grid.n_points + self.grid.center

    def basis(self) -> np.ndarray:
        """Orthonormal columns spanning the finite-difference subspace."""
        if "basis" not in self._cache:
            self._cache["basis"] = _projection_basis(self.grid, self.projection_modes)
        return self._cache["basis"]

    def flow(self, phi, vt, gamma, lam):
        """Period map on (batched) arrays; ``gamma`` may be a column per batch."""
        h = self.forcing
        shape = h.waveform
        if lam == 0.0:
            field_at = lambda t: gamma  # noqa: E731
        else:
            field_at = lambda t: lam * shape(t) + gamma  # noqa: E731
        return self.dynamics.integrate(phi, vt, self.n_steps, self.config, field_at)


def _projection_basis(grid, modes: int) -> np.ndarray:
    n = grid.n_points
    if modes >= n:
        block = np.eye(n)
    else:
        s = np.pi * (grid.nodes + grid.half_length) / grid.half_length
        cols = [np.ones(n)]
        k = 1
        while len(cols) < modes:
            cols.append(np.cos(k * s))
            if len(cols) < modes:
                cols.append(np.sin(k * s))
            k += 1
        block, _ = np.linalg.qr(np.column_stack(cols))
    z = np.zeros_like(block)
    return np.block([[block, z], [z, block]])


@dataclass
class PeriodicOrbit:
    lam: float
    gamma: float
    initial_state: State
    residual_norm: float
    newton_iterations: int
    monodromy_spectral_radius_on_range: float | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def unknowns(self) -> np.ndarray:
        return np.concatenate([self.initial_state.stacked(), [self.gamma]])


# -- maps ---------------------------------------------------------------------------


def time_T_map(initial: State, gamma: float, lam: float, setup: PoincareSetup) -> State:
    """Integrate one period from ``initial`` with ``h_ext = lam h + gamma``."""
    if initial.grid != setup.grid:
        raise DimensionError("state and setup live on different grids")
    phi, vt = setup.flow(initial.phi.values, initial.vartheta.values, gamma, lam)
    return State.from_arrays(setup.grid, phi, vt, initial.time + setup.period)


def _residual(z, lam, setup):
    n = setup.grid.n_points
    phi, vt = setup.flow(z[:n], z[n : 2 * n], z[2 * n], lam)
    return np.concatenate([phi - z[:n], vt - z[n : 2 * n], [z[setup.pin_index]]])


def F_map(phi0, vartheta0, gamma: float, lam: float, setup: PoincareSetup):
    """``(phi(T) - phi0, vartheta(T) - vartheta0, vartheta0(0))``."""
    z = np.concatenate([_values(phi0), _values(vartheta0), [gamma]])
    r = _residual(z, lam, setup)
    n = setup.grid.n_points
    return RealField(setup.grid, r[:n]), RealField(setup.grid, r[n : 2 * n]), float(r[-1])


def _values(u):
    return u.values if isinstance(u, RealField) else np.asarray(u, dtype=float)


def fd_jacobian(z, lam: float, setup: PoincareSetup, basis: np.ndarray | None = None):
    """Central-difference Jacobian columns of ``F`` along ``basis`` and ``gamma``.

    All perturbed trajectories are integrated as one batch.  Returns
    ``(JV, Jgamma)`` with shapes ``(2N+1, m)`` and ``(2N+1,)``.
    """
    V = setup.basis() if basis is None else basis
    n2, m = V.shape
    h = setup.fd_step * (1.0 + np.linalg.norm(z))
    dirs = np.zeros((m + 1, n2 + 1))
    dirs[:m, :n2] = V.T
    dirs[m, n2] = 1.0
    batch = np.concatenate([z + h * dirs, z - h * dirs])
    n = setup.grid.n_points
    phi, vt = setup.flow(batch[:, :n], batch[:, n:n2], batch[:, n2:], lam)
    out = np.concatenate(
        [phi - batch[:, :n], vt - batch[:, n:n2], batch[:, setup.pin_index : setup.pin_index + 1]],
        axis=1,
    )
    cols = (out[: m + 1] - out[m + 1 :]) / (2.0 * h)
    return cols[:m].T, cols[m]


def _newton_picard_step(r, JV, Jg, V, pin):
    """Solve the projected linear system for the update ``dz``."""
    n2 = V.shape[0]
    rs, rp = r[:n2], r[n2]
    JVs, Jgs = JV[:n2], Jg[:n2]
    e = np.zeros(n2)
    e[pin] = 1.0
    # P = I - V V^T applied to vectors
    proj = lambda y: y - V @ (V.T @ y)  # noqa: E731
    top = np.column_stack([V.T @ JVs, V.T @ Jgs])
    Pe = proj(e)
    bottom = np.concatenate([V[pin] + Pe @ JVs, [Pe @ Jgs]])
    A = np.vstack([top, bottom])
    b = -np.concatenate([V.T @ rs, [rp + Pe @ rs]])
    sol = np.linalg.solve(A, b)
    a, dg = sol[:-1], sol[-1]
    dh = proj(rs + JVs @ a + Jgs * dg)
    return np.concatenate([V @ a + dh, [dg]])


def _jacobian(z, lam, setup, refresh=False):
    cache = setup._cache
    if refresh or "jacobian" not in cache:
        cache["jacobian"] = fd_jacobian(z, lam, setup)
        cache["jacobian_count"] = cache.get("jacobian_count", 0) + 1
    return cache["jacobian"]


def monodromy_radius(setup: PoincareSetup) -> float | None:
    """Spectral radius of the projected monodromy with the neutral mode removed."""
    if "jacobian" not in setup._cache:
        return None
    JV, _ = setup._cache["jacobian"]
    V = setup.basis()
    M = V.T @ JV[: V.shape[0]] + np.eye(V.shape[1])
    mu = np.linalg.eigvals(M)
    mu = np.delete(mu, np.argmin(np.abs(mu - 1.0)))
    return float(np.max(np.abs(mu))) if mu.size else 0.0


def solve_periodic(lam: float, warm_start=None, setup: PoincareSetup | None = None) -> PeriodicOrbit:
    """Find ``(phi0, vartheta0, gamma)`` with ``F = 0`` at amplitude ``lam``.

    ``warm_start`` may be a :class:`PeriodicOrbit` or a stacked unknown
    vector of length ``2N + 1``.  The Jacobian is reused (chord steps) while
    the residual contracts by at least ``setup.stall_ratio`` per step and is
    recomputed at the current iterate otherwise.

    Raises
    ------
    ContinuationStepError
        On divergence, damping failure, or a validity exit during the solve.
    """
    if setup is None:
        raise InvalidParameterError("a PoincareSetup is required")
    grid = setup.grid
    n = grid.n_points
    if lam == 0.0 and warm_start is None:
        zero = State.zero(grid)
        return PeriodicOrbit(0.0, 0.0, zero, 0.0, 0, monodromy_radius(setup), {"trivial": True})
    if warm_start is None:
        z = np.zeros(2 * n + 1)
    elif isinstance(warm_start, PeriodicOrbit):
        z = warm_start.unknowns.copy()
    else:
        z = np.array(warm_start, dtype=float)
    if z.shape != (2 * n + 1,):
        raise DimensionError("warm start has the wrong size")

    V = setup.basis()
    pin = setup.pin_index
    history = []
    try:
        r = _residual(z, lam, setup)
        rnorm = float(np.max(np.abs(r)))
        history.append(rnorm)
        JV, Jg = _jacobian(z, lam, setup)
        step_norm = float("inf")
        fresh = False
        it = 0
        while not (rnorm <= setup.tolerance and step_norm <= setup.step_tolerance):
            if it >= setup.max_newton_iterations:
                raise ContinuationStepError("Newton iteration limit reached", rnorm)
            dz = _newton_picard_step(r, JV, Jg, V, pin)
            mu = 1.0
            for _ in range(setup.max_halvings + 1):
                trial = z + mu * dz
                try:
                    r_trial = _residual(trial, lam, setup)
                    t_norm = float(np.max(np.abs(r_trial)))
                except ValidityError:
                    t_norm = float("inf")
                if t_norm < rnorm or t_norm <= 0.1 * setup.tolerance:
                    break
                mu *= 0.5
            else:
                if not fresh:
                    JV, Jg = _jacobian(z, lam, setup, refresh=True)
                    fresh = True
                    continue
                raise ContinuationStepError("Newton damping exhausted", rnorm)
            ratio = t_norm / rnorm if rnorm > 0 else 0.0
            step_norm = float(np.max(np.abs(mu * dz)))
            z, r, rnorm = trial, r_trial, t_norm
            history.append(rnorm)
            it += 1
            fresh = False
            if ratio > setup.stall_ratio and rnorm > setup.tolerance:
                JV, Jg = _jacobian(z, lam, setup, refresh=True)
                fresh = True
        # pinning is linear, so Newton satisfies it up to rounding; make it exact
        z[pin] = 0.0
        r = _residual(z, lam, setup)
        rnorm = float(np.max(np.abs(r)))
    except ValidityError as err:
        raise ContinuationStepError(f"validity exit during Newton solve: {err}") from err
    if not np.isfinite(rnorm) or rnorm > setup.tolerance:
        raise ContinuationStepError("residual above tolerance after pinning", rnorm)
    state = State.from_arrays(grid, z[:n], z[n : 2 * n])
    return PeriodicOrbit(
        lam=float(lam),
        gamma=float(z[2 * n]),
        initial_state=state,
        residual_norm=rnorm,
        newton_iterations=it,
        monodromy_spectral_radius_on_range=monodromy_radius(setup),
        diagnostics={"residual_history": history,
                     "jacobian_evaluations": setup._cache.get("jacobian_count", 0)},
    )


@dataclass
class ContinuationResult:
    orbits: list
    completed: bool
    lambda_reached: float
    message: str = ""
    attempts: list = field(default_factory=list)

    def __len__(self):
        return len(self.orbits)

    def __iter__(self):
        return iter(self.orbits)

    def __getitem__(self, i):
        return self.orbits[i]

    @property
    def nontrivial(self) -> list:
        return [o for o in self.orbits if o.lam != 0.0]

    def gamma_curve(self) -> np.ndarray:
        return np.array([[o.lam, o.gamma] for o in self.orbits])


def continuation(lambda_max: float, n_steps: int, setup: PoincareSetup, solver=None) -> ContinuationResult:
    """Warm-started sweep ``lam = 0 -> lambda_max``, halving the step on failure.

    A secant predictor extrapolates from the last two orbits.  After a
    successful shortened step the step length grows back towards
    ``lambda_max / n_steps``.  If the step falls below 1e-6 the sweep stops
    and the partial result is returned with ``completed=False``.
    """
    solver = solver or solve_periodic
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be at least 1")
    orbits = [solver(0.0, None, setup)]
    attempts = []
    if lambda_max == 0.0:
        return ContinuationResult(orbits, True, 0.0, attempts=attempts)
    base = lambda_max / n_steps
    dlam = base
    lam = 0.0
    while abs(lam) < abs(lambda_max) * (1 - 1e-12):
        target = lam + dlam
        if abs(target) > abs(lambda_max):
            target = lambda_max
        guess = orbits[-1].unknowns
        if len(orbits) >= 2:
            prev = orbits[-2]
            span = orbits[-1].lam - prev.lam
            if span != 0:
                guess = guess + (target - orbits[-1].lam) / span * (orbits[-1].unknowns - prev.unknowns)
                guess[setup.pin_index] = 0.0
        try:
            orbit = solver(target, guess, setup)
        except ContinuationStepError as err:
            attempts.append({"lambda": target, "step": dlam, "ok": False, "error": str(err)})
            log.info("continuation step to %.6g failed (%s); halving", target, err)
            dlam *= 0.5
            if abs(dlam) < MIN_STEP:
                msg = f"step below {MIN_STEP:g} at lambda = {lam:.6g}"
                return ContinuationResult(orbits, False, lam, msg, attempts)
            continue
        attempts.append({"lambda": target, "step": dlam, "ok": True,
                         "iterations": orbit.newton_iterations})
        orbits.append(orbit)
        lam = target
        dlam = min(2.0 * dlam, base) if base > 0 else max(2.0 * dlam, base)
    return ContinuationResult(orbits, True, lam, attempts=attempts)


# -- verification ---------------------------------------------------------------------


def magnetization(phi, theta) -> np.ndarray:
    cp = np.cos(phi)
    return np.stack([cp * np.cos(theta), cp * np.sin(theta), np.sin(phi)])


def verify_orbit(orbit: PeriodicOrbit, setup: PoincareSetup, periods: int = 3) -> dict:
    """Re-integrate an orbit and measure how well it closes.

    ``composed`` applies the period map ``periods`` times (each application
    restarts the multistep scheme, exactly as in the Newton solve);
    ``continuous`` integrates ``periods * T`` in one run.  Both report the
    maximum deviation from the initial state after each period.  The unit
    length of the reconstructed magnetization is checked on every period
    snapshot.
    """
    grid = setup.grid
    z0 = orbit.initial_state.stacked()
    n = grid.n_points
    gamma, lam = orbit.gamma, orbit.lam
    composed = []
    phi, vt = z0[:n], z0[n:]
    snapshots = [(phi, vt)]
    for _ in range(periods):
        phi, vt = setup.flow(phi, vt, gamma, lam)
        composed.append(float(np.max(np.abs(np.concatenate([phi, vt]) - z0))))
        snapshots.append((phi, vt))

    continuous = []
    marks = {setup.n_steps * (k + 1) for k in range(periods)}

    def grab(i, t, p, v):
        if i in marks:
            continuous.append(float(np.max(np.abs(np.concatenate([p, v]) - z0))))

    config = setup.config
    shape = setup.forcing.waveform
    setup.dynamics.integrate(z0[:n], z0[n:], setup.n_steps * periods, config,
                             lambda t: lam * shape(t) + gamma, callback=grab)
    unit = 0.0
    for p, v in snapshots:
        m = magnetization(p, setup.wall.theta + v)
        unit = max(unit, float(np.max(np.abs(np.sqrt(np.sum(m * m, axis=0)) - 1.0))))
    return {
        "lambda": lam,
        "gamma": gamma,
        "residual": orbit.residual_norm,
        "composed": composed,
        "continuous": continuous,
        "unit_length_defect": unit,
        "pin": float(abs(orbit.initial_state.vartheta.values[grid.center])),
    }


def gamma_derivative_oracle(L0_entries: np.ndarray, b: np.ndarray, T: float, panels: int = 64):
    """``int_0^T exp((T - s) L0) b ds`` by composite Simpson quadrature.

    Uses one exponential of the panel width and repeated products.
    """
    import scipy.linalg

    if panels % 2:
        raise InvalidParameterError("Simpson needs an even number of panels")
    step = scipy.linalg.expm((T / panels) * L0_entries)
    vals = [b]
    for _ in range(panels):
        vals.append(step @ vals[-1])
    # vals[k] = exp(k T/panels L0) b, i.e. the integrand at s = T - k T/panels
    w = np.ones(panels + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return (T / panels) / 3.0 * np.tensordot(w, np.array(vals), axes=1)


def gamma_evenness(orbits_pos, orbits_neg) -> list:
    """``|gamma(lam) - gamma(-lam)|`` for matching amplitudes (reported only)."""
    neg = {round(o.lam, 14): o.gamma for o in orbits_neg}
    rows = []
    for o in orbits_pos:
        key = round(-o.lam, 14)
        if key in neg and o.lam != 0:
            rows.append({"lambda": o.lam, "gamma_plus": o.gamma, "gamma_minus": neg[key],
                         "defect": abs(o.gamma - neg[key]),
                         "within_bound": abs(o.gamma - neg[key]) <= 1e-3 * abs(o.gamma) + 1e-10})
    return rows


def default_setup(wall: WallProfile, forcing: ForcingModel | None = None, dt: float | None = None,
                  scheme: str = "bdf2", **kw) -> PoincareSetup:
    forcing = forcing or ForcingModel("sine", 1.0)
    dt = dt if dt is not None else forcing.period / 2000
    return PoincareSetup(wall, forcing, IntegratorConfig(dt=dt, scheme=scheme), **kw)


__all__ = [
    "ContinuationResult",
    "ContinuationStepError",
    "F_map",
    "PeriodicOrbit",
    "PoincareSetup",
    "continuation",
    "default_setup",
    "fd_jacobian",
    "gamma_derivative_oracle",
    "magnetization",
    "solve_periodic",
    "time_T_map",
    "verify_orbit",
]
