"""Rescaled wall energy, its Euler-Lagrange residual and the static Neel wall.

A phase profile is stored as ``theta = theta_ref + w`` with the Gudermannian
reference ``theta_ref(x) = arcsin(tanh x)``, scaled by ``s_L = (pi/2) /
gd(L)`` so that ``theta_ref(+-L) = +-pi/2`` exactly on a cell of half length
``L`` (``s_L`` rounds to 1 once ``L`` exceeds about 40).  Only the decaying
part ``w`` is ever differentiated spectrally; ``theta_ref'`` and
``theta_ref''`` are analytic.

The node ``x = -L`` carries the pinned boundary value ``theta = -pi/2`` and
is excluded from residual norms.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .params import DimensionError, Grid, InvalidParameterError, RealField, RescaledParameters
from .strayfield import StrayFieldOperator

log = logging.getLogger(__name__)

HALF_PI = 0.5 * math.pi


class SolverFailure(RuntimeError):
    """Iteration did not reach its tolerance; carries the last residual."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (last residual {residual:.3e})")
        self.residual = residual


@lru_cache(maxsize=32)
def stray_operator(epsilon: float, grid: Grid) -> StrayFieldOperator:
    """Shared, immutable multiplier tables per ``(epsilon, grid)``."""
    return StrayFieldOperator(epsilon, grid)


def reference_scale(half_length=None) -> float:
    if half_length is None or not np.isfinite(half_length):
        return 1.0
    return HALF_PI / float(np.arctan(np.sinh(half_length)))


def reference_phase(x, half_length=None):
    # arctan(sinh x) == arcsin(tanh x) without the cancellation near |x| ~ 20
    return reference_scale(half_length) * np.arctan(np.sinh(x))


def reference_derivative(x, half_length=None):
    return reference_scale(half_length) / np.cosh(x)


def reference_second_derivative(x, half_length=None):
    return -reference_scale(half_length) * np.tanh(x) / np.cosh(x)


def residual_norm(res) -> float:
    """Maximum norm over the nodes, skipping the pinned node ``x = -L``."""
    return float(np.max(np.abs(np.asarray(res)[..., 1:])))


@dataclass(frozen=True)
class PhaseProfile:
    """Phase ``theta = theta_ref + w`` sampled on a grid.

    ``theta(-L) = -pi/2`` and ``theta(L) = pi/2`` hold whenever ``w`` is odd.
    """

    grid: Grid
    w: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.array(self.w, dtype=float)
        if w.shape != (self.grid.n_points,):
            raise DimensionError("perturbation length does not match grid")
        if not np.all(np.isfinite(w)):
            raise InvalidParameterError("phase profile must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "w", w)

    @classmethod
    def reference(cls, grid: Grid) -> "PhaseProfile":
        return cls(grid, np.zeros(grid.n_points))

    @classmethod
    def from_theta(cls, grid: Grid, theta) -> "PhaseProfile":
        return cls(grid, np.asarray(theta) - reference_phase(grid.nodes, grid.half_length))

    @property
    def theta(self) -> np.ndarray:
        return reference_phase(self.grid.nodes, self.grid.half_length) + self.w

    @property
    def derivative(self) -> np.ndarray:
        return reference_derivative(self.grid.nodes, self.grid.half_length) + self.grid.diff(self.w)

    @property
    def second_derivative(self) -> np.ndarray:
        return reference_second_derivative(self.grid.nodes, self.grid.half_length) + self.grid.diff2(self.w)

    def perturbed(self, v) -> "PhaseProfile":
        return PhaseProfile(self.grid, self.w + v)


def _check(profile: PhaseProfile, params: RescaledParameters):
    if not isinstance(profile, PhaseProfile):
        raise TypeError("expected a PhaseProfile")
    if not isinstance(params, RescaledParameters):
        raise TypeError("expected RescaledParameters")


def energy_terms(profile: PhaseProfile, params: RescaledParameters) -> dict:
    """Exchange, anisotropy and stray-field parts of the rescaled energy."""
    _check(profile, params)
    grid = profile.grid
    S = stray_operator(params.epsilon, grid)
    x, w = grid.nodes, profile.w
    c = np.cos(profile.theta)
    # int theta'^2 with the cross term integrated by parts (exact for periodic
    # w) so that the residual below is the exact discrete gradient
    d1 = reference_derivative(x, grid.half_length)
    exchange = params.kappa * (
        grid.inner(d1, d1)
        - 2.0 * grid.inner(reference_second_derivative(x, grid.half_length), w)
        - grid.inner(w, grid.diff2(w))
    )
    anisotropy = grid.inner(c, c)
    stray = grid.inner(S(c, twisted=True), c)
    return {
        "exchange": float(exchange),
        "anisotropy": float(anisotropy),
        "stray": float(stray),
        "total": float(exchange + anisotropy + stray),
    }


def energy(profile: PhaseProfile, params: RescaledParameters) -> float:
    """``kappa int theta'^2 + int cos^2 theta + (1/eps) int S[cos theta] cos theta``."""
    return energy_terms(profile, params)["total"]


def el_residual_array(grid: Grid, theta, d2theta, params: RescaledParameters) -> np.ndarray:
    """Residual from sampled ``theta`` and ``theta''`` (any admissible input,
    including profiles that are not of the form ``theta_ref + w``)."""
    S = stray_operator(params.epsilon, grid)
    s, c = np.sin(theta), np.cos(theta)
    return params.kappa * d2theta + s * c + S(c, twisted=True) * s


def el_residual(profile: PhaseProfile, params: RescaledParameters) -> RealField:
    """``kappa theta'' + sin(2 theta)/2 + (1/eps) S[cos theta] sin theta``."""
    _check(profile, params)
    return RealField(
        profile.grid,
        el_residual_array(profile.grid, profile.theta, profile.second_derivative, params),
    )


def el_jacobian_action(profile: PhaseProfile, params: RescaledParameters, v):
    """Linearization of the residual at ``profile`` applied to (batched) ``v``."""
    grid = profile.grid
    S = stray_operator(params.epsilon, grid)
    theta = profile.theta
    s, c = np.sin(theta), np.cos(theta)
    potential = np.cos(2.0 * theta) + S(c, twisted=True) * c
    return params.kappa * grid.diff2(v) + potential * v - S(s * v, twisted=True) * s


@dataclass
class SolverOptions:
    """Tolerances and limits for :func:`solve_wall`.

    Norms are maximum norms of the Euler-Lagrange residual on the nodes.
    """

    flow_tolerance: float = 1e-3
    tolerance: float = 1e-8
    max_flow_iterations: int = 20000
    max_newton_iterations: int = 40
    armijo: float = 1e-4
    initial_step: float = 1.0
    max_step: float = 50.0
    max_halvings: int = 30
    polish_iterations: int = 3
    tail_threshold: float = 0.05


@dataclass
class WallProfile:
    """Converged static wall with diagnostics."""

    profile: PhaseProfile
    derivative: np.ndarray
    params: RescaledParameters
    el_residual_norm: float
    tail_value: float
    energy: float
    energy_terms: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.profile.grid

    @property
    def theta(self) -> np.ndarray:
        return self.profile.theta

    @property
    def second_derivative(self) -> np.ndarray:
        return self.profile.second_derivative

    @property
    def warnings(self) -> list:
        return self.diagnostics.setdefault("warnings", [])

    def stray(self) -> StrayFieldOperator:
        return stray_operator(self.params.epsilon, self.grid)


def tail_value(profile: PhaseProfile) -> float:
    """Largest ``|cos theta|`` on the outer half ``|x| >= L/2`` of the cell.

    ``cos theta`` itself vanishes at the node ``x = -L`` by symmetry, so the
    outer half is what measures how much of the tail the cell cuts off.
    """
    x = profile.grid.nodes
    outer = np.abs(x) >= 0.5 * profile.grid.half_length
    return float(np.max(np.abs(np.cos(profile.theta[outer]))))


def _clip(grid, w):
    # keep -pi/2 <= theta <= pi/2
    ref = reference_phase(grid.nodes, grid.half_length)
    return np.clip(ref + w, -HALF_PI, HALF_PI) - ref


def _odd_basis_indices(grid):
    pos = np.arange(grid.center + 1, grid.n_points)
    return pos, grid.mirror_index[pos]


def _newton_matrix(profile, params):
    grid = profile.grid
    pos, neg = _odd_basis_indices(grid)
    basis = np.zeros((pos.size, grid.n_points))
    rows = np.arange(pos.size)
    basis[rows, pos] = 1.0
    basis[rows, neg] = -1.0
    images = el_jacobian_action(profile, params, basis)
    return images[:, pos].T


def solve_wall(
    params: RescaledParameters,
    grid: Grid | None = None,
    options: SolverOptions | None = None,
    initial=None,
) -> WallProfile:
    """Compute the odd Neel wall phase on ``grid``.

    A semi-implicit L2 gradient flow with Armijo backtracking brings the
    residual below ``options.flow_tolerance``; Newton's method on odd fields
    (where the linearization is invertible, its kernel ``theta'`` being even)
    finishes to ``options.tolerance`` and polishes to rounding level.

    Parameters
    ----------
    params : RescaledParameters
    grid : Grid, optional
        Defaults to ``Grid()`` (L = 200, N = 4096).
    options : SolverOptions, optional
    initial : array_like, optional
        Starting perturbation ``w``; the reference profile by default.

    Raises
    ------
    InvalidParameterError
        For ``kappa`` or ``epsilon`` below 1e-6.
    SolverFailure
        When either phase exhausts its iteration budget.
    """
    grid = grid or Grid()
    options = options or SolverOptions()
    if params.kappa < 1e-6 or params.epsilon < 1e-6:
        raise InvalidParameterError("kappa and epsilon must be at least 1e-6")

    w = np.zeros(grid.n_points) if initial is None else grid.odd_part(np.asarray(initial, float))
    w = _clip(grid, w)
    profile = PhaseProfile(grid, w)
    history = {"flow_energy": [], "flow_residual": [], "newton_residual": []}

    res = el_residual(profile, params).values
    res_norm = residual_norm(res)
    e_now = energy(profile, params)
    history["flow_energy"].append(e_now)
    history["flow_residual"].append(res_norm)

    # phase 1: semi-implicit L2 gradient flow, Armijo backtracking on the energy
    lap = params.kappa * grid.xi**2
    tau = options.initial_step
    it = 0
    while res_norm >= options.flow_tolerance:
        if it >= options.max_flow_iterations:
            raise SolverFailure("gradient flow did not reach its tolerance", res_norm)
        grad = grid.odd_part(res)
        for _ in range(options.max_halvings):
            step = grid.multiply(tau * grad, 1.0 / (1.0 + tau * lap))
            trial = PhaseProfile(grid, _clip(grid, profile.w + step))
            e_trial = energy(trial, params)
            descent = 2.0 * grid.inner(grad, trial.w - profile.w)
            if e_trial <= e_now - options.armijo * max(descent, 0.0) and descent > 0:
                break
            tau *= 0.5
        else:
            raise SolverFailure("line search failed in gradient flow", res_norm)
        profile, e_now = trial, e_trial
        res = el_residual(profile, params).values
        res_norm = residual_norm(res)
        history["flow_energy"].append(e_now)
        history["flow_residual"].append(res_norm)
        tau = min(2.0 * tau, options.max_step)
        it += 1
    flow_iterations = it

    # phase 2: damped Newton on odd perturbations
    pos, neg = _odd_basis_indices(grid)
    history["newton_residual"].append(res_norm)
    newton_it = 0
    polish = 0
    while True:
        if res_norm <= options.tolerance:
            if polish >= options.polish_iterations or res_norm < 1e-14:
                break
            polish += 1
        if newton_it >= options.max_newton_iterations:
            if res_norm <= options.tolerance:
                break
            raise SolverFailure("Newton iteration did not converge", res_norm)
        jac = _newton_matrix(profile, params)
        delta_pos = np.linalg.solve(jac, -res[pos])
        delta = np.zeros(grid.n_points)
        delta[pos] = delta_pos
        delta[neg] = -delta_pos
        mu = 1.0
        for _ in range(8):
            trial = PhaseProfile(grid, _clip(grid, profile.w + mu * delta))
            trial_res = el_residual(trial, params).values
            trial_norm = residual_norm(trial_res)
            if trial_norm < res_norm:
                break
            mu *= 0.5
        else:
            if res_norm <= options.tolerance:
                break
            raise SolverFailure("Newton damping exhausted", res_norm)
        profile, res, res_norm = trial, trial_res, trial_norm
        history["newton_residual"].append(res_norm)
        newton_it += 1

    terms = energy_terms(profile, params)
    tail = tail_value(profile)
    diagnostics = {
        "flow_iterations": flow_iterations,
        "newton_iterations": newton_it,
        "history": history,
        "warnings": [],
    }
    if tail > options.tail_threshold:
        msg = (
            f"domain too small: |cos theta| reaches {tail:.3g} on |x| >= L/2 "
            f"(threshold {options.tail_threshold})"
        )
        diagnostics["warnings"].append(msg)
        log.warning(msg)
    return WallProfile(
        profile=profile,
        derivative=profile.derivative,
        params=params,
        el_residual_norm=res_norm,
        tail_value=tail,
        energy=terms["total"],
        energy_terms=terms,
        diagnostics=diagnostics,
    )


def transfer_wall(wall: WallProfile, grid: Grid, options: SolverOptions | None = None) -> WallProfile:
    """Re-solve ``wall`` on another grid, starting from its interpolant.

    Truncating Fourier modes alone leaves an Euler-Lagrange defect of the
    size of the discarded modes, which would swamp the kernel checks on
    coarse grids; a few Newton steps remove it.
    """
    if grid == wall.grid:
        return wall
    x = grid.nodes
    inside = np.abs(x) < wall.grid.half_length
    w0 = np.zeros(grid.n_points)
    w0[inside] = wall.grid.evaluate(wall.profile.w, x[inside])
    # the reference is rescaled with L; carry theta over, not w
    w0 += reference_phase(x, wall.grid.half_length) - reference_phase(x, grid.half_length)
    return solve_wall(wall.params, grid, options, initial=w0)


def apriori_norms(wall: WallProfile) -> dict:
    """Quantities bounded independently of ``epsilon`` for small ``epsilon``."""
    grid = wall.grid
    theta, dtheta = wall.theta, wall.derivative
    s, c = np.sin(theta), np.cos(theta)
    dc = -s * dtheta
    stray_term = wall.stray()(c, twisted=True) * c
    return {
        "theta_prime_L2": float(grid.norm(dtheta)),
        "cos_theta_H1": float(np.sqrt(grid.inner(c, c) + grid.inner(dc, dc))),
        "theta_prime_Linf": float(np.max(np.abs(dtheta))),
        "stray_cos_Linf": float(np.max(np.abs(stray_term))),
    }
