"""Model parameters, the uniform periodic grid and sampled fields.

Fourier conventions
-------------------
Fields are sampled at ``x_j = -L + j h`` with ``h = 2L/N``.  The transforms
are numpy's unnormalized DFT; every physical quantity is assembled from
multiplier actions and the quadrature ``(u, v) = h sum_j u_j v_j``, so the
only constant that ever appears is Parseval in the form

    h * sum_j u_j v_j = (h / N) * sum_k U_k conj(V_k).

Two families of fields live on the grid.  Decaying unknowns (phi, vartheta,
theta') are ``2L``-periodic and use the frequencies ``xi_k = pi k / L``.
Anything carrying an odd number of factors ``cos(theta)`` or ``sin(theta)``
is ``2L``-antiperiodic, because the wall turns the magnetization by pi over
one cell; those fields use the half-shifted frequencies
``pi (k + 1/2) / L`` and are handled by the ``twisted`` helpers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class InvalidParameterError(ValueError):
    """A model or configuration value violates its invariant."""


class DimensionError(ValueError):
    """Fields or operators living on different grids were combined."""


@dataclass(frozen=True)
class PhysicalParameters:
    """Material constants of the unscaled thin-film model."""

    d: float
    delta: float
    Q: float
    alpha: float = 0.0

    def __post_init__(self):
        for name in ("d", "delta", "Q"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise InvalidParameterError(f"{name} must be positive, got {value!r}")
        if not np.isfinite(self.alpha):
            raise InvalidParameterError("alpha must be finite")


@dataclass(frozen=True)
class RescaledParameters:
    """Dimensionless exchange constant, small parameter and LLG ratio."""

    kappa: float = 1.0
    epsilon: float = 0.1
    alpha: float = 0.5

    def __post_init__(self):
        if not (np.isfinite(self.kappa) and self.kappa > 0):
            raise InvalidParameterError(f"kappa must be positive, got {self.kappa!r}")
        if not (np.isfinite(self.epsilon) and self.epsilon > 0):
            raise InvalidParameterError(f"epsilon must be positive, got {self.epsilon!r}")
        if not np.isfinite(self.alpha):
            raise InvalidParameterError("alpha must be finite")

    def with_alpha(self, alpha: float) -> "RescaledParameters":
        return RescaledParameters(self.kappa, self.epsilon, alpha)


def rescale(params: PhysicalParameters) -> RescaledParameters:
    """Map ``(d, delta, Q, alpha)`` to ``(kappa, epsilon, alpha)``.

    ``kappa = d**2 Q / delta**2`` and ``epsilon = Q``.
    """
    if not isinstance(params, PhysicalParameters):
        raise TypeError("rescale expects PhysicalParameters")
    kappa = params.d**2 * params.Q / params.delta**2
    return RescaledParameters(kappa=kappa, epsilon=params.Q, alpha=params.alpha)


@dataclass(frozen=True)
class Grid:
    """Uniform grid on ``[-L, L)`` with an even number of nodes.

    The node ``x = 0`` sits at index ``N // 2``; index 0 is ``x = -L``,
    identified with ``+L`` by periodicity.
    """

    half_length: float = 200.0
    n_points: int = 4096

    def __post_init__(self):
        if not (np.isfinite(self.half_length) and self.half_length > 0):
            raise InvalidParameterError("half_length must be positive")
        if int(self.n_points) != self.n_points or self.n_points < 4:
            raise InvalidParameterError("n_points must be an integer >= 4")
        if self.n_points % 2:
            raise InvalidParameterError(
                f"n_points must be even so that x = 0 is a node, got {self.n_points}"
            )
        object.__setattr__(self, "n_points", int(self.n_points))
        object.__setattr__(self, "half_length", float(self.half_length))

    # -- geometry -----------------------------------------------------------

    @property
    def spacing(self) -> float:
        return 2.0 * self.half_length / self.n_points

    @cached_property
    def nodes(self) -> np.ndarray:
        x = -self.half_length + self.spacing * np.arange(self.n_points)
        x.setflags(write=False)
        return x

    @property
    def center(self) -> int:
        """Index of the node ``x = 0``."""
        return self.n_points // 2

    @cached_property
    def mirror_index(self) -> np.ndarray:
        """Index map ``j -> j'`` with ``x_j' = -x_j`` (mod 2L)."""
        return (-np.arange(self.n_points)) % self.n_points

    # -- frequencies --------------------------------------------------------

    @cached_property
    def xi(self) -> np.ndarray:
        """Periodic frequencies ``pi k / L`` in numpy FFT order."""
        k = np.fft.fftfreq(self.n_points, d=1.0 / self.n_points)
        return np.pi * k / self.half_length

    @property
    def frequencies(self) -> np.ndarray:
        """Periodic frequencies for ``k = -N/2 .. N/2-1``, ascending."""
        return np.fft.fftshift(self.xi)

    @cached_property
    def xi_twisted(self) -> np.ndarray:
        """Half-shifted frequencies ``pi (k + 1/2) / L`` for antiperiodic fields."""
        return self.xi + np.pi / (2.0 * self.half_length)

    @cached_property
    def _ik(self) -> np.ndarray:
        ik = 1j * self.xi
        ik[self.n_points // 2] = 0.0  # Nyquist mode has no odd derivative
        return ik

    @cached_property
    def _twist(self) -> np.ndarray:
        return np.exp(1j * np.pi * self.nodes / (2.0 * self.half_length))

    # -- quadrature ---------------------------------------------------------

    def inner(self, u, v) -> float:
        return self.spacing * np.sum(np.asarray(u) * np.asarray(v), axis=-1)

    def norm(self, u) -> float:
        return np.sqrt(self.inner(u, u))

    def spectral_inner(self, u, v) -> float:
        """Frequency-side evaluation of ``inner(u, v)`` (Parseval)."""
        U = np.fft.fft(u, axis=-1)
        V = np.fft.fft(v, axis=-1)
        return self.spacing / self.n_points * np.real(np.sum(U * np.conj(V), axis=-1))

    # -- multipliers --------------------------------------------------------

    def multiply(self, u, symbol) -> np.ndarray:
        """Apply a real even multiplier sampled on ``xi`` to a periodic field."""
        return np.fft.irfft(
            np.fft.rfft(u, axis=-1) * symbol[: self.n_points // 2 + 1],
            n=self.n_points,
            axis=-1,
        )

    def multiply_twisted(self, u, symbol) -> np.ndarray:
        """Apply a real even multiplier sampled on ``xi_twisted`` to an
        antiperiodic field."""
        g = np.fft.fft(np.asarray(u) / self._twist, axis=-1)
        return np.real(self._twist * np.fft.ifft(symbol * g, axis=-1))

    def diff(self, u) -> np.ndarray:
        """Spectral first derivative of a periodic field."""
        return np.fft.irfft(
            np.fft.rfft(u, axis=-1) * self._ik[: self.n_points // 2 + 1],
            n=self.n_points,
            axis=-1,
        )

    def diff2(self, u) -> np.ndarray:
        """Spectral second derivative of a periodic field."""
        return self.multiply(u, -self.xi**2)

    def dense(self, apply) -> np.ndarray:
        """Matrix of a linear map given by its action on batched fields."""
        return apply(np.eye(self.n_points)).T.copy()

    # -- symmetry and resampling ---------------------------------------------

    def reflect(self, u) -> np.ndarray:
        """``u(-x)`` sampled on the grid."""
        return np.asarray(u)[..., self.mirror_index]

    def odd_part(self, u) -> np.ndarray:
        return 0.5 * (np.asarray(u) - self.reflect(u))

    def even_part(self, u) -> np.ndarray:
        return 0.5 * (np.asarray(u) + self.reflect(u))

    def evaluate(self, u, x) -> np.ndarray:
        """Trigonometric interpolant of a periodic field at arbitrary points."""
        x = np.asarray(x, dtype=float)
        U = np.fft.fft(u) / self.n_points
        k = np.fft.fftfreq(self.n_points, d=1.0 / self.n_points)
        nyq = self.n_points // 2
        weights = np.ones(self.n_points)
        weights[nyq] = 0.0
        phase = np.exp(1j * np.pi * np.outer(x + self.half_length, k) / self.half_length)
        out = phase @ (U * weights)
        # split the Nyquist mode symmetrically so the interpolant stays real
        out += U[nyq] * np.cos(np.pi * nyq * (x + self.half_length) / self.half_length)
        return np.real(out)

    def describe(self) -> dict:
        return {"half_length": self.half_length, "n_points": self.n_points}


@dataclass(frozen=True)
class RealField:
    """Real samples of a function on a :class:`Grid`."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise DimensionError(
                f"expected {self.grid.n_points} samples, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidParameterError("field values must be finite")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: Grid, func) -> "RealField":
        return cls(grid, func(grid.nodes))


def _same_grid(u: RealField, v: RealField) -> Grid:
    if u.grid != v.grid:
        raise DimensionError("fields live on different grids")
    return u.grid


def inner_product(u: RealField, v: RealField) -> float:
    """Rectangle-rule ``L2`` inner product ``h * sum_j u_j v_j``."""
    grid = _same_grid(u, v)
    return float(grid.inner(u.values, v.values))


def norm(u: RealField) -> float:
    return math.sqrt(inner_product(u, u))


def derivative(u: RealField) -> RealField:
    return RealField(u.grid, u.grid.diff(u.values))


def second_derivative(u: RealField) -> RealField:
    return RealField(u.grid, u.grid.diff2(u.values))
