import math

import numpy as np
import pytest
import scipy.linalg

from neelwall import DimensionError, Grid, InvalidParameterError, RealField
from neelwall.dynamics import (
    ForcingModel,
    IntegratorConfig,
    State,
    ValidityError,
    WallDynamics,
    evolve,
    rhs,
    step,
)
from neelwall.energy import el_residual, solve_wall
from neelwall.linops import assemble_L0


def smooth_pair(grid, rng, width=4.0):
    out = []
    for _ in range(2):
        u = rng.standard_normal(grid.n_points) * np.exp(-(grid.nodes / width) ** 2)
        out.append(grid.multiply(u, np.exp(-(grid.xi / 2.0) ** 2)))
    v = np.concatenate(out)
    return v / np.abs(v).max()


@pytest.fixture(scope="module")
def L0_small(small_wall):
    return assemble_L0(small_wall)


def test_wall_is_stationary(coarse_wall):
    z = State.zero(coarse_wall.grid)
    r1, r2 = rhs(z, coarse_wall, 0.0)
    assert np.max(np.abs(r1.values)) < 1e-10
    assert np.max(np.abs(r2.values)) < 1e-10


def test_in_plane_states_couple_through_alpha(small_wall, rng):
    g = small_wall.grid
    vt = 0.3 * rng.standard_normal(g.n_points)
    r1, r2 = rhs(State.from_arrays(g, np.zeros(g.n_points), vt), small_wall, 0.0)
    np.testing.assert_allclose(r1.values, small_wall.params.alpha * r2.values, atol=1e-12, rtol=0)


def test_linearization_slope(small_wall, L0_small, rng):
    g = small_wall.grid
    n = g.n_points
    v = smooth_pair(g, rng)
    dyn = WallDynamics(small_wall)
    errs = []
    hs = [1e-2, 1e-3, 1e-4]
    for h in hs:
        r1, r2 = dyn.rhs(h * v[:n], h * v[n:])
        errs.append(np.linalg.norm(np.concatenate([r1, r2]) - h * (L0_small @ v)))
    slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
    assert slope >= 1.9


def test_gamma_derivative(coarse_wall):
    dyn = WallDynamics(coarse_wall)
    n = coarse_wall.grid.n_points
    z = np.zeros(n)
    g = 1e-4
    a1, a2 = dyn.rhs(z, z, g)
    b1, b2 = dyn.rhs(z, z, -g)
    p = coarse_wall.params
    c = np.cos(coarse_wall.theta)
    np.testing.assert_allclose((a1 - b1) / (2 * g), p.alpha * c / p.epsilon, atol=1e-8, rtol=0)
    np.testing.assert_allclose((a2 - b2) / (2 * g), c / p.epsilon, atol=1e-8, rtol=0)


def test_rhs_validity_guard(small_wall):
    g = small_wall.grid
    s = State.from_arrays(g, np.full(g.n_points, 0.8), np.zeros(g.n_points), time=1.5)
    with pytest.raises(ValidityError) as info:
        rhs(s, small_wall, 0.0)
    assert info.value.time == 1.5


def test_rhs_grid_mismatch(small_wall):
    with pytest.raises(DimensionError):
        rhs(State.zero(Grid(5.0, 16)), small_wall, 0.0)


def test_zero_state_is_fixed(small_wall):
    # the only source is the wall's own Euler-Lagrange residual, pinned node included
    z = State.zero(small_wall.grid)
    dt = 1e-3
    out = step(z, dt, small_wall, ForcingModel("zero"))
    assert out.time == dt
    res = el_residual(small_wall.profile, small_wall.params).values
    bound = dt * (1 + abs(small_wall.params.alpha)) * np.max(np.abs(res))
    assert np.max(np.abs(out.stacked())) <= 2 * bound + 1e-16


@pytest.mark.parametrize("scheme,order", [("euler", 2), ("bdf2", 3)])
def test_one_step_local_error(small_wall, L0_small, rng, scheme, order):
    # odd part in the amplitude removes the quadratic terms of the nonlinearity
    g = small_wall.grid
    n = g.n_points
    v = smooth_pair(g, rng)
    d = 1e-3
    forcing = ForcingModel("zero")
    dts = [1e-2, 5e-3, 2.5e-3]
    errs = []
    for dt in dts:
        cfg = IntegratorConfig(dt=dt, scheme=scheme)
        E = scipy.linalg.expm(dt * L0_small.entries)

        def one(sign):
            u0 = sign * d * v
            s0 = State.from_arrays(g, u0[:n], u0[n:])
            if scheme == "euler":
                return step(s0, dt, small_wall, forcing, config=cfg).stacked()
            u1 = E @ u0
            s1 = State.from_arrays(g, u1[:n], u1[n:], dt)
            return step(s1, dt, small_wall, forcing, config=cfg, previous=s0).stacked()

        lin = (one(1.0) - one(-1.0)) / (2 * d)
        exact = (E @ v) if scheme == "euler" else (E @ (E @ v))
        errs.append(np.max(np.abs(lin - exact)))
    slopes = np.diff(np.log(errs)) / np.diff(np.log(dts))
    assert slopes.min() >= order - 0.2, slopes


def test_bdf2_self_convergence(small_wall, rng):
    g = small_wall.grid
    n = g.n_points
    v = 0.05 * smooth_pair(g, rng)
    dyn = WallDynamics(small_wall)
    finals = []
    for m in (500, 1000, 2000):
        cfg = IntegratorConfig(dt=1.0 / m)
        p, q = dyn.integrate(v[:n], v[n:], m, cfg, lambda t: 0.05 * math.sin(2 * math.pi * t))
        finals.append(np.concatenate([p, q]))
    e1 = np.max(np.abs(finals[0] - finals[1]))
    e2 = np.max(np.abs(finals[1] - finals[2]))
    assert math.log2(e1 / e2) >= 1.9


def test_stationary_long_run(small_wall):
    z = State.zero(small_wall.grid)
    traj = evolve(z, 10.0, small_wall, ForcingModel("zero"), config=IntegratorConfig(dt=2e-3),
                  with_energy=False)
    assert np.max(np.abs(traj.final.stacked())) < 1e-10
    assert traj.final.time == pytest.approx(10.0)


def test_constant_field_drives_translation(small_wall):
    z = State.zero(small_wall.grid)
    forcing = ForcingModel("zero", gamma=0.01)
    traj = evolve(z, 0.5, small_wall, forcing, config=IntegratorConfig(dt=1e-3), with_energy=False)
    drift = traj.diagnostics["drift"]
    assert drift[0] == 0.0
    assert np.all(np.diff(drift) > 0)


def test_perturbation_decays(small_wall, rng):
    g = small_wall.grid
    n = g.n_points
    d = small_wall.derivative
    v = 0.01 * smooth_pair(g, rng)
    v[n:] -= g.inner(small_wall.params.alpha * v[:n] + v[n:], d) / g.inner(d, d) * d
    init = State.from_arrays(g, v[:n], v[n:])
    traj = evolve(init, 5.0, small_wall, ForcingModel("zero"), config=IntegratorConfig(dt=1e-3))
    norm = traj.diagnostics["norm"]
    assert norm[-1] < 0.05 * norm[0]
    energy = traj.diagnostics["energy"]
    assert energy[-1] <= energy[0]


def test_no_out_of_plane_motion_without_precession(params, rng):
    wall = solve_wall(params.with_alpha(0.0), Grid(25.0, 256))
    g = wall.grid
    vt = 0.01 * smooth_pair(g, rng)[: g.n_points]
    init = State.from_arrays(g, np.zeros(g.n_points), vt)
    traj = evolve(init, 0.2, wall, ForcingModel("zero"), config=IntegratorConfig(dt=1e-3),
                  with_energy=False)
    assert np.max(np.abs(traj.final.phi.values)) < 1e-14


def test_validity_exit_records_time(small_wall):
    z = State.zero(small_wall.grid)
    forcing = ForcingModel("sine", 1.0, lam=5.0)
    cfg = IntegratorConfig(dt=0.05)
    with pytest.raises(ValidityError) as info:
        evolve(z, 2.0, small_wall, forcing, config=cfg)
    assert 0 < info.value.time <= 2.0
    traj = evolve(z, 2.0, small_wall, forcing, config=cfg, raise_on_exit=False)
    assert traj.exit_time == info.value.time


def test_integrator_config_validation():
    with pytest.raises(InvalidParameterError):
        IntegratorConfig(dt=0.0)
    with pytest.raises(InvalidParameterError):
        IntegratorConfig(scheme="rk4")
    with pytest.raises(InvalidParameterError):
        IntegratorConfig(max_phi=2.0)
    with pytest.raises(InvalidParameterError):
        IntegratorConfig(dt=0.3).steps_for(1.0)
    assert IntegratorConfig(dt=1e-3).steps_for(1.0) == 1000


def test_tabulated_forcing(tmp_path):
    with pytest.raises(InvalidParameterError):
        ForcingModel("tabulated", 1.0, times=[0.0, 0.5, 1.0], values=[0.0, 1.0, 0.1])
    f = ForcingModel("tabulated", 2.0, lam=2.0, gamma=0.5, times=[0.0, 1.0, 2.0], values=[0.0, 1.0, 0.0])
    assert f.waveform(0.5) == pytest.approx(0.5)
    assert f.waveform(2.5) == pytest.approx(0.5)
    assert f.waveform(-0.5) == pytest.approx(0.5)
    assert f.h_ext(1.0) == pytest.approx(2.5)
    path = tmp_path / "h.csv"
    path.write_text("t,h\n0,0\n0.25,1\n0.5,0\n0.75,-1\n1,0\n")
    g = ForcingModel.from_csv(path, 1.0)
    assert g.waveform(0.125) == pytest.approx(0.5)
    assert not g.space_dependent


def test_space_dependent_forcing(tmp_path):
    grid = Grid(2.0, 8)
    path = tmp_path / "hx.csv"
    path.write_text("t,-2,0,2\n0,0,1,0\n0.5,1,1,1\n1,0,1,0\n")
    f = ForcingModel.from_csv(path, 1.0, grid=grid)
    assert f.space_dependent
    h = f.waveform(0.25)
    assert h.shape == (8,)
    assert h[grid.center] == pytest.approx(1.0)
    assert h[0] == pytest.approx(0.5)


def test_forcing_kinds():
    assert ForcingModel("sine").waveform(0.25) == pytest.approx(1.0)
    assert ForcingModel("cosine").waveform(0.5) == pytest.approx(-1.0)
    assert ForcingModel("zero", gamma=0.2).h_ext(0.3) == 0.2
    with pytest.raises(InvalidParameterError):
        ForcingModel("square")
    with pytest.raises(InvalidParameterError):
        ForcingModel("sine", period=0.0)


def test_trajectory_outputs(small_wall, tmp_path):
    z = State.zero(small_wall.grid)
    traj = evolve(z, 0.01, small_wall, ForcingModel("sine", lam=0.01),
                  config=IntegratorConfig(dt=1e-3), snapshot_times=[0.0, 0.005, 0.01])
    assert [s.time for s in traj.states] == pytest.approx([0.0, 0.005, 0.01])
    paths = traj.write_csv(tmp_path)
    assert len(paths) == 4
    data = np.loadtxt(paths[0], delimiter=",")
    assert data.shape == (small_wall.grid.n_points, 4)
    diag = np.loadtxt(tmp_path / "diagnostics.csv", delimiter=",", skiprows=1)
    assert diag.shape[0] == 11
    assert RealField(small_wall.grid, traj.final.phi.values) is not None
