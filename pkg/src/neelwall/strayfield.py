"""Reduced stray-field symbol and the rescaled multiplier ``(1/eps) S_eps``.

The symbol is

    sigma_eps(xi) = 1 - (1 - exp(-eps |xi|)) / (eps |xi|),

real, even, between 0 and 1, and vanishing at ``xi = 0``.  Only the rescaled
operator ``(1/eps) S_eps`` enters the model equations, so that is what
:class:`StrayFieldOperator` applies.
"""

from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from .params import DimensionError, Grid, InvalidParameterError, RealField

#: below this value of ``t = eps |xi|`` the power series is used; above it
#: ``sigma >= 1/e`` and the closed form loses no digits
TAYLOR_SWITCH = 1.0

# sigma(t) / t = sum_{k>=0} (-t)^k / (k + 2)!, truncated where 1/(k+2)! < 1e-17
_SERIES = [(-1.0) ** k / math.factorial(k + 2) for k in range(18)]


def _check_epsilon(epsilon):
    if not (np.isfinite(epsilon) and epsilon > 0):
        raise InvalidParameterError(f"epsilon must be positive, got {epsilon!r}")


def _sigma_over_t(t):
    """``sigma(t) / t`` for ``0 <= t < 1`` by Horner's rule."""
    out = np.zeros_like(t)
    for c in reversed(_SERIES):
        out = out * t + c
    return out


def _split(t):
    t = np.abs(np.asarray(t, dtype=float))
    small = t < TAYLOR_SWITCH
    return t, small


def symbol(xi, epsilon: float):
    """Evaluate ``sigma_eps(xi)``; scalar in, scalar out."""
    _check_epsilon(epsilon)
    t, small = _split(epsilon * np.asarray(xi, dtype=float))
    out = np.empty_like(t)
    out[small] = t[small] * _sigma_over_t(t[small])
    tl = t[~small]
    out[~small] = 1.0 + np.expm1(-tl) / tl
    return float(out) if out.ndim == 0 else out


def rescaled_symbol(xi, epsilon: float):
    """Evaluate ``sigma_eps(xi) / eps``, bounded above by ``|xi| / 2``.

    On the series branch this is ``|xi| * sigma(t) / t`` so no digits are
    lost for tiny ``xi``.
    """
    _check_epsilon(epsilon)
    xi_arr = np.abs(np.asarray(xi, dtype=float))
    t, small = _split(epsilon * xi_arr)
    out = np.empty_like(t)
    out[small] = xi_arr[small] * _sigma_over_t(t[small])
    tl = t[~small]
    out[~small] = (1.0 + np.expm1(-tl) / tl) / epsilon
    return float(out) if out.ndim == 0 else out


class StrayFieldOperator:
    """``(1/eps) S_eps`` on a grid, for periodic and antiperiodic fields.

    Parameters
    ----------
    epsilon : float
        Small parameter of the rescaled model.
    grid : Grid
        Discretization the multiplier tables are built for.
    """

    def __init__(self, epsilon: float, grid: Grid):
        _check_epsilon(epsilon)
        self.epsilon = float(epsilon)
        self.grid = grid
        self.multiplier = rescaled_symbol(grid.xi, epsilon)
        self.multiplier_twisted = rescaled_symbol(grid.xi_twisted, epsilon)
        self.multiplier.setflags(write=False)
        self.multiplier_twisted.setflags(write=False)

    @property
    def max_multiplier(self) -> float:
        return float(max(self.multiplier.max(), self.multiplier_twisted.max()))

    def __call__(self, u, twisted: bool = False) -> np.ndarray:
        """Array-level action; ``u`` may carry leading batch axes."""
        if np.shape(u)[-1] != self.grid.n_points:
            raise DimensionError("field length does not match the operator grid")
        if twisted:
            return self.grid.multiply_twisted(u, self.multiplier_twisted)
        return self.grid.multiply(u, self.multiplier)

    def apply(self, u: RealField, twisted: bool = False, extend: int = 1) -> RealField:
        """Return ``(1/eps) S_eps[u]``.

        ``extend > 1`` zero-pads ``u`` to a cell ``extend`` times longer before
        transforming, which pushes the periodic images of the nonlocal kernel
        away and approaches the real-line operator; the result is restricted
        back to the original nodes.
        """
        if u.grid != self.grid:
            raise DimensionError("field and operator live on different grids")
        if extend == 1:
            return RealField(self.grid, self(u.values, twisted=twisted))
        if twisted:
            raise InvalidParameterError("zero extension applies to periodic fields only")
        n = self.grid.n_points
        big = Grid(extend * self.grid.half_length, extend * n)
        offset = (extend * n - n) // 2
        padded = np.zeros(big.n_points)
        padded[offset : offset + n] = u.values
        out = big.multiply(padded, rescaled_symbol(big.xi, self.epsilon))
        return RealField(self.grid, out[offset : offset + n])

    @cached_property
    def matrix(self) -> np.ndarray:
        """Dense symmetric matrix of the periodic action."""
        return _symmetrize(self.grid.dense(self))

    @cached_property
    def matrix_twisted(self) -> np.ndarray:
        """Dense symmetric matrix of the antiperiodic action."""
        return _symmetrize(self.grid.dense(lambda u: self(u, twisted=True)))


def _symmetrize(a):
    return 0.5 * (a + a.T)
