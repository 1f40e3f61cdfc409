"""Dense linearizations at the static wall and their spectra.

``L1`` acts on the out-of-plane angle, ``L2`` on the in-plane phase and
``L0 = (L1, alpha L2; -alpha L1, L2)`` is the linearized LLG right-hand
side.  Matrices are dense, so everything here is meant for coarse grids
(``N <= 1024``); use :func:`neelwall.energy.transfer_wall` to get there.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .energy import WallProfile
from .params import DimensionError, Grid, InvalidParameterError, RealField
from .strayfield import rescaled_symbol

#: largest matrix handed to the dense exponential
MAX_EXPM_SIZE = 1024


class ResourceError(RuntimeError):
    """Problem too large for a dense algorithm."""


class EigenSolverError(RuntimeError):
    """LAPACK failed; carries a condition estimate of the matrix."""


@dataclass
class LinearOperatorMatrix:
    entries: np.ndarray
    symmetric: bool
    grid: Grid | None = None
    label: str = "custom"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionError("operator matrix must be square")
        self.entries = a
        if self.symmetric:
            defect = np.max(np.abs(a - a.T))
            if defect > 1e-10 * max(np.max(np.abs(a)), 1.0):
                raise InvalidParameterError(f"matrix flagged symmetric has defect {defect:.2e}")

    @property
    def size(self) -> int:
        return self.entries.shape[0]

    def __matmul__(self, u):
        return self.entries @ u

    def apply(self, u):
        return self.entries @ np.asarray(u)

    @property
    def norm(self) -> float:
        """Spectral norm (power iteration on ``A^T A``)."""
        if "norm" not in self.meta:
            self.meta["norm"] = spectral_norm(self.entries)
        return self.meta["norm"]


def spectral_norm(a: np.ndarray, tol: float = 1e-10, max_iter: int = 500) -> float:
    x = np.random.default_rng(0).standard_normal(a.shape[1])
    x /= np.linalg.norm(x)
    sigma = 0.0
    for _ in range(max_iter):
        y = a.T @ (a @ x)
        s = np.sqrt(np.linalg.norm(y))
        x = y / np.linalg.norm(y)
        if abs(s - sigma) <= tol * s:
            return float(s)
        sigma = s
    return float(sigma)


# -- assembly --------------------------------------------------------------------


def _laplacian(grid: Grid) -> np.ndarray:
    d2 = grid.dense(grid.diff2)
    return 0.5 * (d2 + d2.T)


def _wall_fields(wall: WallProfile):
    theta = wall.theta
    s, c = np.sin(theta), np.cos(theta)
    Bc = wall.stray()(c, twisted=True) * c
    return theta, s, c, Bc


def l1_potential(wall: WallProfile) -> np.ndarray:
    """Pointwise part of ``L1``."""
    p = wall.params
    theta, _, _, Bc = _wall_fields(wall)
    return -1.0 / p.epsilon - 0.5 + 0.5 * np.cos(2 * theta) + p.kappa * wall.derivative**2 + Bc


def apply_L1(wall: WallProfile, u):
    """Matrix-free ``L1 u`` (batched)."""
    g = wall.grid
    return wall.params.kappa * g.diff2(u) + l1_potential(wall) * u + wall.stray()(u)


def apply_L2(wall: WallProfile, v):
    """Matrix-free ``L2 v`` (batched)."""
    g = wall.grid
    theta, s, _, Bc = _wall_fields(wall)
    S = wall.stray()
    return (
        wall.params.kappa * g.diff2(v)
        + (np.cos(2 * theta) + Bc) * v
        - S(s * v, twisted=True) * s
    )


def assemble_L1(wall: WallProfile) -> LinearOperatorMatrix:
    g = wall.grid
    a = wall.params.kappa * _laplacian(g) + np.diag(l1_potential(wall)) + wall.stray().matrix
    return LinearOperatorMatrix(a, True, g, "L1", {"params": wall.params})


def assemble_L2(wall: WallProfile) -> LinearOperatorMatrix:
    g = wall.grid
    theta, s, _, Bc = _wall_fields(wall)
    sandwich = s[:, None] * wall.stray().matrix_twisted * s[None, :]
    a = wall.params.kappa * _laplacian(g) + np.diag(np.cos(2 * theta) + Bc) - sandwich
    return LinearOperatorMatrix(a, True, g, "L2", {"params": wall.params})


def assemble_L0(wall: WallProfile, alpha: float | None = None, L1=None, L2=None) -> LinearOperatorMatrix:
    """Block operator ``(L1, alpha L2; -alpha L1, L2)`` of size ``2N``."""
    alpha = wall.params.alpha if alpha is None else float(alpha)
    A = (L1 or assemble_L1(wall)).entries
    B = (L2 or assemble_L2(wall)).entries
    a = np.block([[A, alpha * B], [-alpha * A, B]])
    return LinearOperatorMatrix(a, alpha == 0.0, wall.grid, "L0",
                                {"params": wall.params, "alpha": alpha})


def block_operator(A, B, alpha: float) -> np.ndarray:
    return np.block([[A, alpha * B], [-alpha * A, B]])


# -- quadratic forms --------------------------------------------------------------


def _values(u):
    return u.values if isinstance(u, RealField) else np.asarray(u, dtype=float)


def quadratic_form_G(op: LinearOperatorMatrix, u, v) -> float:
    """``(-op u, v)`` in the grid inner product."""
    uu, vv = _values(u), _values(v)
    if uu.shape[-1] != op.size or vv.shape[-1] != op.size:
        raise DimensionError("field size does not match operator")
    if isinstance(u, RealField) and isinstance(v, RealField) and u.grid != v.grid:
        raise DimensionError("fields live on different grids")
    grid = op.grid
    h = grid.spacing if grid is not None else 1.0
    return float(h * np.dot(-(op.entries @ uu), vv))


def quadratic_form_H(u: RealField, v: RealField, epsilon: float, twisted: bool = False) -> float:
    """``int (1 + sigma_eps / eps) u_hat conj(v_hat)`` by Parseval.

    ``twisted=True`` evaluates the weight at the half-shifted frequencies,
    for fields that change sign across the cell (such as ``u sin theta``).
    """
    if u.grid != v.grid:
        raise DimensionError("fields live on different grids")
    g = u.grid
    if twisted:
        U = np.fft.fft(u.values / g._twist)
        V = np.fft.fft(v.values / g._twist)
        weight = 1.0 + rescaled_symbol(g.xi_twisted, epsilon)
    else:
        U = np.fft.fft(u.values)
        V = np.fft.fft(v.values)
        weight = 1.0 + rescaled_symbol(g.xi, epsilon)
    return float(g.spacing / g.n_points * np.real(np.sum(weight * U * np.conj(V))))


# -- spectra -----------------------------------------------------------------------


@dataclass
class SpectrumReport:
    label: str
    eigenvalues: np.ndarray
    kernel_dimension_estimate: int
    spectral_gap: float
    imaginary_axis_violations: list
    tolerances: dict
    operator_norm: float
    max_real_nonzero: float
    claims: dict = field(default_factory=dict)
    parameters: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.claims.values())

    def to_dict(self) -> dict:
        ev = np.asarray(self.eigenvalues)
        return {
            "label": self.label,
            "parameters": self.parameters,
            "eigenvalues": {"real": ev.real.tolist(), "imag": ev.imag.tolist()},
            "kernel_dimension_estimate": self.kernel_dimension_estimate,
            "spectral_gap": self.spectral_gap,
            "imaginary_axis_violations": [[z.real, z.imag] for z in self.imaginary_axis_violations],
            "tolerances": self.tolerances,
            "operator_norm": self.operator_norm,
            "max_real_nonzero": self.max_real_nonzero,
            "claims": self.claims,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _eigenvalues(a: np.ndarray, symmetric: bool) -> np.ndarray:
    try:
        if symmetric:
            return scipy.linalg.eigh(a, eigvals_only=True).astype(complex)
        # geev balances (permutes and scales) before the QR iteration
        return scipy.linalg.eigvals(a)
    except (np.linalg.LinAlgError, ValueError) as err:
        try:
            cond = float(np.linalg.cond(a)) if np.all(np.isfinite(a)) else float("inf")
        except np.linalg.LinAlgError:
            cond = float("inf")
        raise EigenSolverError(f"eigensolver failed ({err}); condition number {cond:.3e}") from err


def _report(label, ev, norm, tol_zero, tol_re, parameters=None) -> SpectrumReport:
    order = np.lexsort((ev.imag, ev.real))
    ev = ev[order]
    mag = np.abs(ev)
    zero = mag <= tol_zero * norm
    nonzero = ev[~zero]
    violations = [complex(z) for z in nonzero if abs(z.real) <= tol_re * norm]
    gap = float(np.min(np.abs(nonzero))) if nonzero.size else float("inf")
    max_re = float(np.max(nonzero.real)) if nonzero.size else float("-inf")
    kdim = int(np.count_nonzero(zero))
    claims = {"imaginary_axis_empty": not violations}
    if label == "L1":
        claims = {"negative_definite": bool(np.max(ev.real) < 0)}
    elif label == "L2":
        claims = {"kernel_dimension_one": kdim == 1, "gap_positive": gap > 0}
    elif label == "L0":
        claims["kernel_dimension_one"] = kdim == 1
    return SpectrumReport(
        label=label,
        eigenvalues=ev,
        kernel_dimension_estimate=kdim,
        spectral_gap=gap,
        imaginary_axis_violations=violations,
        tolerances={"zero": tol_zero, "real_part": tol_re, "relative_to_norm": True},
        operator_norm=norm,
        max_real_nonzero=max_re,
        claims=claims,
        parameters=parameters or {},
    )


def spectrum(op: LinearOperatorMatrix, tol_zero: float = 1e-6, tol_re: float = 1e-8) -> SpectrumReport:
    """Full dense spectrum; thresholds are relative to the spectral norm.

    Eigenvalues with ``|lam| <= tol_zero ||op||`` count towards the kernel;
    nonzero ones with ``|Re lam| <= tol_re ||op||`` are imaginary-axis
    violations.
    """
    ev = _eigenvalues(op.entries, op.symmetric)
    params = {}
    if "params" in op.meta:
        p = op.meta["params"]
        params = {"kappa": p.kappa, "epsilon": p.epsilon, "alpha": op.meta.get("alpha", p.alpha)}
    if op.grid is not None:
        params.update(op.grid.describe())
    return _report(op.label, ev, op.norm, tol_zero, tol_re, params)


def block_lemma_check(A, B, alpha: float, tol: float = 1e-8, tol_zero: float = 1e-6) -> SpectrumReport:
    """Spectrum of ``T = (A, alpha B; -alpha A, B)`` for symmetric ``A, B``.

    ``T`` factors as ``M diag(A, B)`` where the symmetric part of ``M^{-1}``
    is ``I / (1 + alpha^2)``; no nonzero purely imaginary eigenvalue can
    occur, which is what the report's violation list checks.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParameterError("A and B must be square and of equal size")
    for name, m in (("A", A), ("B", B)):
        if np.max(np.abs(m - m.T)) > 1e-12 * max(1.0, np.max(np.abs(m))):
            raise InvalidParameterError(f"{name} is not symmetric")
    T = block_operator(A, B, alpha)
    norm = spectral_norm(T)
    ev = _eigenvalues(T, False)
    rep = _report("block", ev, norm, tol_zero, tol, {"alpha": alpha, "n": A.shape[0]})
    return rep


# -- range, kernel, semigroup --------------------------------------------------------


def project_range(f, wall: WallProfile, alpha: float | None = None):
    """Split ``f = (0, lam theta') + r`` with ``r`` in the range of ``L0``.

    Returns ``((r1, r2), lam)``.
    """
    alpha = wall.params.alpha if alpha is None else alpha
    f1, f2 = f
    for part in (f1, f2):
        if part.grid != wall.grid:
            raise DimensionError("field and wall live on different grids")
    g = wall.grid
    d = wall.derivative
    lam = g.inner(alpha * f1.values + f2.values, d) / g.inner(d, d)
    return (RealField(g, f1.values), RealField(g, f2.values - lam * d)), float(lam)


def kernel_vector(wall: WallProfile) -> np.ndarray:
    """``(0, theta')`` stacked."""
    return np.concatenate([np.zeros(wall.grid.n_points), wall.derivative])


def semigroup_action(op: LinearOperatorMatrix, t: float, u) -> np.ndarray:
    """``exp(t op) u`` by the scaling-and-squaring exponential.

    Raises
    ------
    ResourceError
        If ``op`` is larger than :data:`MAX_EXPM_SIZE`; project to a coarse
        grid first.
    """
    if t < 0:
        raise InvalidParameterError("semigroup time must be nonnegative")
    if op.size > MAX_EXPM_SIZE:
        raise ResourceError(
            f"dense exponential limited to size {MAX_EXPM_SIZE}, got {op.size}; "
            "transfer the wall to a coarser grid"
        )
    return semigroup_matrix(op, t) @ np.asarray(u)


def semigroup_matrix(op: LinearOperatorMatrix, t: float) -> np.ndarray:
    if op.size > MAX_EXPM_SIZE:
        raise ResourceError(f"dense exponential limited to size {MAX_EXPM_SIZE}")
    cache = op.meta.setdefault("expm", {})
    key = float(t)
    if key not in cache:
        cache[key] = scipy.linalg.expm(t * op.entries)
    return cache[key]


def range_basis(wall: WallProfile, alpha: float | None = None) -> np.ndarray:
    """Orthonormal (Euclidean) basis of ``{f : (alpha f1 + f2, theta') = 0}``."""
    alpha = wall.params.alpha if alpha is None else alpha
    d = wall.derivative
    n = np.concatenate([alpha * d, d])
    n /= np.linalg.norm(n)
    q, _ = np.linalg.qr(np.column_stack([n, np.eye(n.size)]))
    return q[:, 1 : n.size]


def range_restricted_min_singular_value(op: LinearOperatorMatrix, wall: WallProfile, t: float) -> float:
    """Smallest singular value of ``exp(t L0) - I`` on the range of ``L0``."""
    E = semigroup_matrix(op, t) - np.eye(op.size)
    Q = range_basis(wall, op.meta.get("alpha"))
    return float(scipy.linalg.svdvals(Q.T @ E @ Q).min())
