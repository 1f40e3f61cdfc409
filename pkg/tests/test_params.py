import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from neelwall import (
    DimensionError,
    Grid,
    InvalidParameterError,
    PhysicalParameters,
    RealField,
    RescaledParameters,
    rescale,
)
from neelwall.params import derivative, inner_product, norm, second_derivative


def test_rescale_direct_substitution():
    r = rescale(PhysicalParameters(d=1.0, delta=1.0, Q=0.1, alpha=0.5))
    assert (r.kappa, r.epsilon, r.alpha) == (0.1, 0.1, 0.5)
    r = rescale(PhysicalParameters(d=2.0, delta=1.0, Q=0.25, alpha=1.0))
    assert r.kappa == 1.0 and r.epsilon == 0.25 and r.alpha == 1.0


@pytest.mark.parametrize("bad", [dict(d=1, delta=0, Q=0.1), dict(d=-1, delta=1, Q=0.1),
                                 dict(d=1, delta=1, Q=0), dict(d=1, delta=1, Q=float("nan"))])
def test_physical_parameters_rejected(bad):
    with pytest.raises(InvalidParameterError):
        PhysicalParameters(**bad)


@pytest.mark.parametrize("bad", [dict(kappa=0), dict(epsilon=-0.1), dict(alpha=float("inf"))])
def test_rescaled_parameters_rejected(bad):
    with pytest.raises(InvalidParameterError):
        RescaledParameters(**bad)


def test_rescale_type_checked():
    with pytest.raises(TypeError):
        rescale(RescaledParameters())


@pytest.mark.parametrize("n", [4095, 3, 0])
def test_grid_rejects_bad_sizes(n):
    with pytest.raises(InvalidParameterError):
        Grid(10.0, n)


def test_grid_rejects_nonpositive_length():
    with pytest.raises(InvalidParameterError):
        Grid(0.0, 16)


def test_grid_geometry():
    g = Grid(200.0, 4096)
    x = g.nodes
    assert np.all(np.diff(x) > 0)
    assert x[g.center] == 0.0
    assert x[0] == -200.0
    np.testing.assert_array_equal(x[g.mirror_index][1:], -x[1:])
    # frequencies consistent with the DFT of the node set
    k = 3
    u = np.cos(g.xi[k] * x)
    spec = np.abs(np.fft.fft(u))
    assert set(np.flatnonzero(spec > 1e-8 * spec.max())) == {k, g.n_points - k}


def test_inner_product_constant():
    g = Grid(1.0, 4)
    one = RealField(g, np.ones(4))
    assert inner_product(one, one) == 2.0


def test_inner_product_parity():
    g = Grid(7.0, 64)
    x = g.nodes
    u = RealField(g, np.exp(-x**2) + x**2 * np.exp(-(x / 2) ** 2))
    v = RealField(g, g.odd_part(np.sin(x) * np.exp(-(x / 3) ** 2)))
    assert abs(inner_product(u, v)) < 1e-15


def test_inner_product_extended_precision(rng):
    g = Grid(3.0, 128)
    u, v = rng.standard_normal((2, g.n_points))
    with mpmath.workdps(50):
        exact = mpmath.mpf(g.spacing) * mpmath.fsum(mpmath.mpf(a) * mpmath.mpf(b) for a, b in zip(u, v))
    got = inner_product(RealField(g, u), RealField(g, v))
    assert abs(got - float(exact)) <= 1e-14 * float(abs(exact))


def test_grid_mismatch():
    a = RealField(Grid(1.0, 8), np.ones(8))
    b = RealField(Grid(2.0, 8), np.ones(8))
    with pytest.raises(DimensionError):
        inner_product(a, b)


def test_field_invariants():
    g = Grid(1.0, 8)
    with pytest.raises(DimensionError):
        RealField(g, np.ones(7))
    with pytest.raises(InvalidParameterError):
        RealField(g, np.full(8, np.nan))
    f = RealField(g, np.ones(8))
    with pytest.raises(ValueError):
        f.values[0] = 2.0


def test_derivative_single_mode():
    g = Grid(5.0, 64)
    x = g.nodes
    u = RealField(g, np.sin(np.pi * x / g.half_length))
    d = derivative(u).values
    np.testing.assert_allclose(d, np.pi / g.half_length * np.cos(np.pi * x / g.half_length), atol=1e-12)
    d2 = second_derivative(u).values
    np.testing.assert_allclose(d2, -(np.pi / g.half_length) ** 2 * u.values, atol=1e-12)


def test_derivative_constant():
    g = Grid(5.0, 64)
    assert np.max(np.abs(derivative(RealField(g, np.full(64, 3.0))).values)) < 1e-13


def test_derivative_gaussian():
    g = Grid(20.0, 512)
    x = g.nodes
    d = derivative(RealField.from_function(g, lambda s: np.exp(-s**2))).values
    np.testing.assert_allclose(d, -2 * x * np.exp(-x**2), atol=1e-10)


def test_norm_of_gaussian():
    g = Grid(20.0, 512)
    u = RealField.from_function(g, lambda s: np.exp(-s**2))
    assert norm(u) == pytest.approx(math.sqrt(math.sqrt(math.pi / 2)), rel=1e-13)


def test_spectral_inner_matches_nodal(rng):
    g = Grid(4.0, 64)
    u, v = rng.standard_normal((2, 64))
    assert g.spectral_inner(u, v) == pytest.approx(g.inner(u, v), rel=1e-12)


def test_evaluate_reproduces_nodes_and_modes():
    g = Grid(3.0, 32)
    x = g.nodes
    u = np.cos(2 * np.pi * x / g.half_length) + 0.3 * np.sin(np.pi * x / g.half_length)
    np.testing.assert_allclose(g.evaluate(u, x), u, atol=1e-13)
    y = np.linspace(-3, 3, 17)
    exact = np.cos(2 * np.pi * y / 3) + 0.3 * np.sin(np.pi * y / 3)
    np.testing.assert_allclose(g.evaluate(u, y), exact, atol=1e-13)


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_odd_even_split(seed):
    g = Grid(2.0, 32)
    u = np.random.default_rng(seed).standard_normal(32)
    o, e = g.odd_part(u), g.even_part(u)
    np.testing.assert_allclose(o + e, u, atol=1e-15)
    np.testing.assert_allclose(g.reflect(o), -o, atol=1e-15)
    assert abs(g.inner(o, e)) < 1e-12
