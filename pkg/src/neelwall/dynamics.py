"""Forced Landau-Lifshitz-Gilbert dynamics near the static wall.

Unknowns are the out-of-plane angle ``phi`` and the phase perturbation
``vartheta`` with ``theta = theta_eps + vartheta``; both decay and are
treated as periodic fields.  Time stepping is IMEX: the constant-coefficient
block ``kappa (D2, alpha D2; -alpha D2, D2)`` is implicit (a 2x2 solve per
Fourier mode) and every other term is explicit.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .energy import PhaseProfile, WallProfile, energy, reference_derivative, reference_phase
from .energy import reference_second_derivative
from .params import DimensionError, Grid, InvalidParameterError, RealField, RescaledParameters

SCHEMES = ("euler", "bdf2")
STARTUPS = ("richardson", "euler")


class ValidityError(RuntimeError):
    """``|phi|`` left the validity region (or the state blew up)."""

    def __init__(self, time: float, max_phi: float):
        super().__init__(f"|phi| reached {max_phi:.3g} at t = {time:.6g}")
        self.time = time
        self.max_phi = max_phi


@dataclass(frozen=True)
class State:
    phi: RealField
    vartheta: RealField
    time: float = 0.0

    def __post_init__(self):
        if self.phi.grid != self.vartheta.grid:
            raise DimensionError("phi and vartheta live on different grids")

    @property
    def grid(self) -> Grid:
        return self.phi.grid

    @classmethod
    def zero(cls, grid: Grid, time: float = 0.0) -> "State":
        z = np.zeros(grid.n_points)
        return cls(RealField(grid, z), RealField(grid, z), time)

    @classmethod
    def from_arrays(cls, grid: Grid, phi, vartheta, time: float = 0.0) -> "State":
        return cls(RealField(grid, phi), RealField(grid, vartheta), time)

    def stacked(self) -> np.ndarray:
        return np.concatenate([self.phi.values, self.vartheta.values])


# -- forcing -----------------------------------------------------------------

FORCING_KINDS = ("sine", "cosine", "tabulated", "zero")


@dataclass
class ForcingModel:
    """External field ``h_ext(t, x) = lam h(t, x) + gamma`` with ``h`` T-periodic.

    For ``kind="tabulated"`` give ``times`` (from 0 to ``period``) and
    ``values``; ``values`` is 1-D for a scalar waveform or ``(len(times),
    N)`` for a space-dependent field already sampled on the grid nodes.
    Evaluation is linear in time and wraps modulo ``period``.
    """

    kind: str = "sine"
    period: float = 1.0
    lam: float = 0.0
    gamma: float = 0.0
    times: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in FORCING_KINDS:
            raise InvalidParameterError(f"unknown forcing kind {self.kind!r}")
        if not (np.isfinite(self.period) and self.period > 0):
            raise InvalidParameterError("forcing period must be positive")
        if self.kind == "tabulated":
            if self.times is None or self.values is None:
                raise InvalidParameterError("tabulated forcing needs times and values")
            t = np.asarray(self.times, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if t.ndim != 1 or t.size < 2 or np.any(np.diff(t) <= 0):
                raise InvalidParameterError("tabulated times must increase strictly")
            if t[0] != 0.0 or not math.isclose(t[-1], self.period, rel_tol=0, abs_tol=1e-12):
                raise InvalidParameterError("tabulated times must span [0, T]")
            if v.shape[0] != t.size:
                raise InvalidParameterError("one tabulated row per time sample required")
            if not np.array_equal(v[0], v[-1]):
                raise InvalidParameterError("tabulated forcing must satisfy h(0) = h(T) exactly")
            self.times, self.values = t, v

    @property
    def space_dependent(self) -> bool:
        return self.kind == "tabulated" and np.ndim(self.values) == 2

    def waveform(self, t: float):
        """``h(t)``: a float, or an array over the nodes if space dependent."""
        if self.kind == "zero":
            return 0.0
        phase = 2.0 * math.pi * t / self.period
        if self.kind == "sine":
            return math.sin(phase)
        if self.kind == "cosine":
            return math.cos(phase)
        s = math.fmod(t, self.period)
        if s < 0:
            s += self.period
        i = int(np.searchsorted(self.times, s, side="right")) - 1
        i = min(max(i, 0), self.times.size - 2)
        w = (s - self.times[i]) / (self.times[i + 1] - self.times[i])
        out = (1.0 - w) * self.values[i] + w * self.values[i + 1]
        return float(out) if np.ndim(out) == 0 else out

    def h_ext(self, t: float):
        return self.lam * self.waveform(t) + self.gamma

    def with_values(self, lam: float | None = None, gamma: float | None = None) -> "ForcingModel":
        return ForcingModel(
            self.kind,
            self.period,
            self.lam if lam is None else lam,
            self.gamma if gamma is None else gamma,
            self.times,
            self.values,
        )

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "period": self.period,
            "lambda": self.lam,
            "gamma": self.gamma,
            "space_dependent": self.space_dependent,
        }

    @classmethod
    def from_csv(cls, path, period: float, grid: Grid | None = None, lam=0.0, gamma=0.0):
        """Read a two-column ``t,value`` table, or a matrix whose header row
        holds x positions and whose first column holds times."""
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        header = rows[0]
        try:
            [float(c) for c in header]
            numeric_header = True
        except ValueError:
            numeric_header = False
        if len(header) == 2:
            data = np.array([[float(c) for c in r] for r in rows[0 if numeric_header else 1 :]])
            return cls("tabulated", period, lam, gamma, data[:, 0], data[:, 1])
        xs = np.array([float(c) for c in header[1:]])
        data = np.array([[float(c) for c in r] for r in rows[1:]])
        times, samples = data[:, 0], data[:, 1:]
        if grid is not None:
            samples = np.array([np.interp(grid.nodes, xs, row) for row in samples])
        return cls("tabulated", period, lam, gamma, times, samples)


# -- integrator configuration -------------------------------------------------


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 5e-4
    scheme: str = "bdf2"
    dealias: bool = False
    max_phi: float = math.pi / 4
    startup: str = "richardson"

    def __post_init__(self):
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise InvalidParameterError("dt must be positive")
        if self.scheme not in SCHEMES:
            raise InvalidParameterError(f"scheme must be one of {SCHEMES}")
        if self.startup not in STARTUPS:
            raise InvalidParameterError(f"startup must be one of {STARTUPS}")
        if not (0 < self.max_phi < math.pi / 2):
            raise InvalidParameterError("max_phi must lie in (0, pi/2)")

    def steps_for(self, duration: float) -> int:
        """Number of steps covering ``duration``; it must be a multiple of dt."""
        n = round(duration / self.dt)
        if n < 1 or not math.isclose(n * self.dt, duration, rel_tol=1e-9, abs_tol=1e-14):
            raise InvalidParameterError(f"duration {duration} is not a multiple of dt = {self.dt}")
        return n


# -- right-hand side -----------------------------------------------------------


class WallDynamics:
    """Right-hand sides and IMEX stepping for perturbations of one wall.

    All array methods accept leading batch axes; ``h_ext`` broadcasts
    against the field shape (scalar, per-node array, or per-batch column).
    """

    def __init__(self, wall: WallProfile, params: RescaledParameters | None = None, dealias=False):
        self.wall = wall
        self.params = params or wall.params
        if (self.params.kappa, self.params.epsilon) != (wall.params.kappa, wall.params.epsilon):
            raise InvalidParameterError("dynamics parameters must match the wall's kappa and epsilon")
        self.grid = wall.grid
        self.S = wall.stray()
        x = self.grid.nodes
        L = self.grid.half_length
        self._ref = reference_phase(x, L)
        self._ref1 = reference_derivative(x, L)
        self._ref2 = reference_second_derivative(x, L)
        self._w = wall.profile.w
        self._dth = self._ref1 + self.grid.diff(self._w)
        self._d2th = self._ref2 + self.grid.diff2(self._w)
        half = self.grid.n_points // 2 + 1
        xi = self.grid.xi[:half]
        self._xi2 = xi**2
        self._ik = 1j * xi
        self._ik[-1] = 0.0
        self._filter = None
        if dealias:
            self._filter = (np.abs(xi) <= (2.0 / 3.0) * np.abs(xi).max()).astype(float)

    # plumbing

    def _derivs(self, u):
        U = np.fft.rfft(u, axis=-1)
        n = self.grid.n_points
        return (
            np.fft.irfft(U * self._ik, n=n, axis=-1),
            np.fft.irfft(-U * self._xi2, n=n, axis=-1),
        )

    def _terms(self, phi, vt, h):
        p = self.params
        a, k, e = p.alpha, p.kappa, p.epsilon
        dphi, d2phi = self._derivs(phi)
        dvt, d2vt = self._derivs(vt)
        theta = self._ref + self._w + vt
        dth = self._dth + dvt
        d2th = self._d2th + d2vt

        sp, cp = np.sin(phi), np.cos(phi)
        st, ct = np.sin(theta), np.cos(theta)
        sin2t = 2.0 * st * ct
        cos2t = ct * ct - st * st
        sec = 1.0 / cp
        tan = sp * sec
        S_sp = self.S(sp)
        S_cc = self.S(cp * ct, twisted=True)
        dth2 = dth * dth

        r1 = (
            a * h * ct / e
            + S_sp * cp
            + S_cc * sp * ct
            + a * S_cc * st
            - h * sp * st / e
            - 2.0 * a * k * sp * dphi * dth
            + 2.0 * sp * cp * (-2.0 - e + e * cos2t + 2 * e * k * dth2) / (4 * e)
            + k * d2phi
            + 0.5 * a * cp * sin2t
            + a * k * cp * d2th
        )
        r2 = (
            -a * S_sp
            + h * ct * sec / e
            + a * sp * (2.0 + e - e * cos2t) / (2 * e)
            + 0.5 * sin2t
            + a * h * tan * st / e
            + S_cc * sec * st
            - a * S_cc * tan * ct
            - 2.0 * k * tan * dphi * dth
            - a * k * sp * dth2
            - a * k * sec * d2phi
            + k * d2th
        )
        return r1, r2, d2phi, d2vt

    def rhs(self, phi, vt, h_ext=0.0):
        """``(R1, R2)`` evaluated term by term."""
        r1, r2, _, _ = self._terms(phi, vt, h_ext)
        return r1, r2

    def stiff(self, phi, vt):
        k, a = self.params.kappa, self.params.alpha
        d2p = self.grid.diff2(phi)
        d2v = self.grid.diff2(vt)
        return k * (d2p + a * d2v), k * (-a * d2p + d2v)

    def explicit(self, phi, vt, h_ext):
        """Everything in ``rhs`` except the implicit block."""
        r1, r2, d2p, d2v = self._terms(phi, vt, h_ext)
        k, a = self.params.kappa, self.params.alpha
        n1 = r1 - k * (d2p + a * d2v)
        n2 = r2 - k * (-a * d2p + d2v)
        if self._filter is not None:
            n = self.grid.n_points
            n1 = np.fft.irfft(np.fft.rfft(n1, axis=-1) * self._filter, n=n, axis=-1)
            n2 = np.fft.irfft(np.fft.rfft(n2, axis=-1) * self._filter, n=n, axis=-1)
        return n1, n2

    def _implicit_solve(self, b1, b2, a0, c):
        """Solve ``(a0 I - c K) u = b`` mode by mode."""
        n = self.grid.n_points
        al = self.params.alpha
        B1 = np.fft.rfft(b1, axis=-1)
        B2 = np.fft.rfft(b2, axis=-1)
        q = c * self.params.kappa * self._xi2
        pq = a0 + q
        det = pq**2 + (q * al) ** 2
        U1 = (pq * B1 - q * al * B2) / det
        U2 = (q * al * B1 + pq * B2) / det
        return np.fft.irfft(U1, n=n, axis=-1), np.fft.irfft(U2, n=n, axis=-1)

    def step_euler(self, phi, vt, n1, n2, dt):
        return self._implicit_solve(phi + dt * n1, vt + dt * n2, 1.0, dt)

    def step_startup(self, phi, vt, n1, n2, dt, h_ext, t):
        """Second-order first step: Richardson extrapolation of IMEX-Euler."""
        full = self.step_euler(phi, vt, n1, n2, dt)
        half = self.step_euler(phi, vt, n1, n2, 0.5 * dt)
        m1, m2 = self.explicit(half[0], half[1], h_ext(t + 0.5 * dt))
        half = self.step_euler(half[0], half[1], m1, m2, 0.5 * dt)
        return 2.0 * half[0] - full[0], 2.0 * half[1] - full[1]

    def step_bdf2(self, phi, vt, phi_old, vt_old, n1, n2, n1_old, n2_old, dt):
        b1 = 4.0 * phi - phi_old + 2.0 * dt * (2.0 * n1 - n1_old)
        b2 = 4.0 * vt - vt_old + 2.0 * dt * (2.0 * n2 - n2_old)
        return self._implicit_solve(b1, b2, 3.0, 2.0 * dt)

    def integrate(
        self,
        phi,
        vt,
        n_steps: int,
        config: IntegratorConfig,
        h_ext: Callable[[float], object],
        t0: float = 0.0,
        callback: Callable | None = None,
    ):
        """Advance arrays by ``n_steps``; ``callback(step, t, phi, vt)`` after each.

        Raises
        ------
        ValidityError
            As soon as ``max |phi|`` exceeds ``config.max_phi`` or turns
            non-finite.
        """
        dt = config.dt
        phi = np.array(phi, dtype=float)
        vt = np.array(vt, dtype=float)
        old = None
        t = t0
        for i in range(n_steps):
            n1, n2 = self.explicit(phi, vt, h_ext(t))
            if config.scheme == "euler" or (old is None and config.startup == "euler"):
                new = self.step_euler(phi, vt, n1, n2, dt)
            elif old is None:
                new = self.step_startup(phi, vt, n1, n2, dt, h_ext, t)
            else:
                new = self.step_bdf2(phi, vt, old[0], old[1], n1, n2, old[2], old[3], dt)
            old = (phi, vt, n1, n2)
            phi, vt = new
            t = t0 + (i + 1) * dt
            peak = float(np.max(np.abs(phi))) if phi.size else 0.0
            if not (peak <= config.max_phi) or not np.all(np.isfinite(vt)):
                raise ValidityError(t, peak)
            if callback is not None:
                callback(i + 1, t, phi, vt)
        return phi, vt


def _dynamics(wall, params, config):
    return WallDynamics(wall, params, dealias=config.dealias if config else False)


def rhs(state: State, wall: WallProfile, h_ext, params: RescaledParameters | None = None):
    """Right-hand sides ``(R1, R2)`` at ``state`` for a given field value.

    Raises
    ------
    ValidityError
        If ``max |phi|`` exceeds pi/4.
    """
    if state.grid != wall.grid:
        raise DimensionError("state and wall live on different grids")
    peak = float(np.max(np.abs(state.phi.values)))
    if peak > math.pi / 4:
        raise ValidityError(state.time, peak)
    dyn = WallDynamics(wall, params)
    r1, r2 = dyn.rhs(state.phi.values, state.vartheta.values, h_ext)
    return RealField(wall.grid, r1), RealField(wall.grid, r2)


def step(
    state: State,
    dt: float,
    wall: WallProfile,
    forcing: ForcingModel,
    params: RescaledParameters | None = None,
    config: IntegratorConfig | None = None,
    previous: State | None = None,
) -> State:
    """One IMEX step.

    BDF2 needs ``previous``; without it the configured startup step is taken.
    """
    config = config or IntegratorConfig(dt=dt)
    dyn = _dynamics(wall, params, config)
    phi, vt = state.phi.values, state.vartheta.values
    n1, n2 = dyn.explicit(phi, vt, forcing.h_ext(state.time))
    if config.scheme == "bdf2" and previous is not None:
        o1, o2 = dyn.explicit(previous.phi.values, previous.vartheta.values, forcing.h_ext(previous.time))
        new = dyn.step_bdf2(phi, vt, previous.phi.values, previous.vartheta.values, n1, n2, o1, o2, dt)
    elif config.scheme == "bdf2" and config.startup == "richardson":
        new = dyn.step_startup(phi, vt, n1, n2, dt, forcing.h_ext, state.time)
    else:
        new = dyn.step_euler(phi, vt, n1, n2, dt)
    peak = float(np.max(np.abs(new[0])))
    if not (peak <= config.max_phi):
        raise ValidityError(state.time + dt, peak)
    return State.from_arrays(wall.grid, new[0], new[1], state.time + dt)


@dataclass
class Trajectory:
    """Snapshots of an integration plus scalar diagnostics at every step."""

    grid: Grid
    wall: WallProfile
    states: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    exit_time: float | None = None
    forcing: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def final(self) -> State:
        return self.states[-1]

    def write_csv(self, directory, indices=None) -> list:
        """One ``x, phi, vartheta, theta`` CSV per snapshot (or the selected
        ones), plus ``diagnostics.csv``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        x = self.grid.nodes
        theta_eps = self.wall.theta
        chosen = range(len(self.states)) if indices is None else indices
        for k in chosen:
            s = self.states[k]
            path = directory / f"snapshot_{k:04d}.csv"
            data = np.column_stack([x, s.phi.values, s.vartheta.values, theta_eps + s.vartheta.values])
            np.savetxt(path, data, delimiter=",", header=f"t={s.time!r}\nx,phi,vartheta,theta",
                       fmt="%.17g")
            paths.append(path)
        keys = list(self.diagnostics)
        path = directory / "diagnostics.csv"
        np.savetxt(path, np.column_stack([self.diagnostics[k] for k in keys]), delimiter=",",
                   header=",".join(keys), comments="", fmt="%.17g")
        paths.append(path)
        return paths

    def manifest(self) -> dict:
        return {
            "grid": self.grid.describe(),
            "parameters": asdict(self.wall.params),
            "forcing": self.forcing,
            "integrator": self.config,
            "exit_time": self.exit_time,
            "snapshot_times": [s.time for s in self.states],
            "final_max_phi": float(np.max(np.abs(self.states[-1].phi.values))) if self.states else None,
        }

    def write_manifest(self, path, extra: dict | None = None):
        data = self.manifest()
        data.update(extra or {})
        Path(path).write_text(json.dumps(data, indent=2, sort_keys=True))


def evolve(
    initial: State,
    t_final: float,
    wall: WallProfile,
    forcing: ForcingModel,
    params: RescaledParameters | None = None,
    config: IntegratorConfig | None = None,
    snapshot_times: Sequence[float] | None = None,
    with_energy: bool = True,
    raise_on_exit: bool = True,
) -> Trajectory:
    """Fixed-step integration from ``initial.time`` to ``initial.time + t_final``.

    Diagnostics per step: time, ``max|phi|``, the drift ``(vartheta,
    theta_eps')``, the L2 norm of ``(phi, vartheta)`` and, when
    ``with_energy``, the in-plane energy of ``theta_eps + vartheta``.

    Raises
    ------
    ValidityError
        On leaving ``|phi| <= max_phi``, with ``exit_time`` attached.  With
        ``raise_on_exit=False`` the partial trajectory is returned instead
        and ``Trajectory.exit_time`` is set.
    """
    if initial.grid != wall.grid:
        raise DimensionError("initial state and wall live on different grids")
    config = config or IntegratorConfig()
    params = params or wall.params
    n_steps = config.steps_for(t_final)
    dyn = _dynamics(wall, params, config)
    grid = wall.grid
    t0 = initial.time
    if snapshot_times is None:
        snapshot_times = [t0 + t_final]
    snap_steps = {config.steps_for(t - t0) if t > t0 else 0: t for t in snapshot_times}

    traj = Trajectory(grid, wall, forcing=forcing.describe(), config=asdict(config))
    diag = {"time": [], "max_phi": [], "drift": [], "norm": []}
    if with_energy:
        diag["energy"] = []
    dtheta = wall.derivative

    def record(i, t, phi, vt):
        diag["time"].append(t)
        diag["max_phi"].append(float(np.max(np.abs(phi))))
        diag["drift"].append(float(grid.inner(vt, dtheta)))
        diag["norm"].append(float(np.sqrt(grid.inner(phi, phi) + grid.inner(vt, vt))))
        if with_energy:
            diag["energy"].append(energy(PhaseProfile(grid, wall.profile.w + vt), wall.params))
        if i in snap_steps:
            traj.states.append(State.from_arrays(grid, phi, vt, t))

    record(0, t0, initial.phi.values, initial.vartheta.values)
    try:
        dyn.integrate(
            initial.phi.values,
            initial.vartheta.values,
            n_steps,
            config,
            forcing.h_ext,
            t0=t0,
            callback=record,
        )
    except ValidityError as err:
        traj.exit_time = err.time
        traj.diagnostics = {k: np.array(v) for k, v in diag.items()}
        if raise_on_exit:
            err.trajectory = traj
            raise
        return traj
    traj.diagnostics = {k: np.array(v) for k, v in diag.items()}
    return traj
