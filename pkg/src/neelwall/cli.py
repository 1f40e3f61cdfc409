"""Command-line front end: ``neelwall {wall,spectrum,evolve,periodic}``.

Exit codes: 0 success, 1 configuration error, 2 solver failure, 3 validity
exit during time integration, 4 continuation did not reach ``lambda_max``
(partial results are still written).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .archive import ArchiveError, config_hash, load_wall, make_manifest, save_orbits, save_wall, write_json
from .config import OUTPUT_ENV, ConfigError, RunConfig
from .dynamics import ForcingModel, IntegratorConfig, State, ValidityError, evolve
from .energy import SolverFailure, SolverOptions, solve_wall, transfer_wall
from .linops import (
    EigenSolverError,
    assemble_L0,
    assemble_L1,
    assemble_L2,
    block_lemma_check,
    spectrum,
)
from .params import InvalidParameterError
from .periodic import PoincareSetup, continuation, gamma_evenness, verify_orbit

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_VALIDITY, EXIT_NO_ORBIT = 0, 1, 2, 3, 4

log = logging.getLogger("neelwall")


# -- shared plumbing ---------------------------------------------------------------


def _solver_options(cfg: RunConfig) -> SolverOptions:
    return SolverOptions(**cfg.section("solver"))


def obtain_wall(cfg: RunConfig, section: str | None = None):
    """Wall on the grid of ``section``: loaded from the archive when given,
    otherwise solved there directly."""
    grid = cfg.grid(section)
    archive = cfg.doc["wall_archive"]
    if archive:
        wall = load_wall(archive)
        return transfer_wall(wall, grid, _solver_options(cfg))
    return solve_wall(cfg.params, grid, _solver_options(cfg))


def forcing_from(cfg: RunConfig, grid) -> ForcingModel:
    f = cfg.section("forcing")
    if f["kind"] == "tabulated":
        return ForcingModel.from_csv(f["table"], f["period"], grid, f["lambda"], f["gamma"])
    return ForcingModel(f["kind"], f["period"], f["lambda"], f["gamma"])


def _outdir(cfg: RunConfig, name: str) -> Path:
    out = cfg.output_root / name
    out.mkdir(parents=True, exist_ok=True)
    return out


def _manifest(cfg, kind, tolerances=None, **extra):
    return make_manifest(kind, cfg.recipe, tolerances, run_config=cfg.recipe, **extra)


def _table(rows, out=None):
    out = out or sys.stdout
    width = max(len(k) for k, _ in rows)
    for k, v in rows:
        if isinstance(v, float):
            v = f"{v:.6e}"
        print(f"  {k:<{width}}  {v}", file=out)


# -- commands ------------------------------------------------------------------------


def cmd_wall(cfg: RunConfig) -> int:
    """Solve the static wall; write archive, profile CSV and plot."""
    from .plotting import plot_wall

    out = _outdir(cfg, "wall")
    wall = solve_wall(cfg.params, cfg.grid(), _solver_options(cfg))
    tag = config_hash(cfg.recipe)
    save_wall(wall, out / "wall.npz", cfg.recipe)
    x = wall.grid.nodes
    np.savetxt(out / "wall_profile.csv", np.column_stack([x, wall.theta, wall.derivative]),
               delimiter=",", header=f"config_hash={tag} code_version={__version__}\nx,theta,theta_prime",
               fmt="%.17g")
    plot_wall(wall, out / "wall.svg", description=f"config_hash={tag}")
    write_json(out / "manifest.json", _manifest(
        cfg, "wall-run", {"el_residual": cfg.section("solver")["tolerance"]},
        el_residual_norm=wall.el_residual_norm, tail_value=wall.tail_value,
        energy_terms=wall.energy_terms, warnings=wall.warnings,
        files=["wall.npz", "wall_profile.csv", "wall.svg"]))
    print("static wall")
    _table([
        ("exchange", wall.energy_terms["exchange"]),
        ("anisotropy", wall.energy_terms["anisotropy"]),
        ("stray", wall.energy_terms["stray"]),
        ("energy", wall.energy),
        ("el_residual", wall.el_residual_norm),
        ("tail_value", wall.tail_value),
        ("flow_iterations", wall.diagnostics["flow_iterations"]),
        ("newton_iterations", wall.diagnostics["newton_iterations"]),
    ])
    for w in wall.warnings:
        print(f"warning: {w}")
    return EXIT_OK


def _block_lemma_mode(cfg, out) -> dict:
    s = cfg.section("spectrum")
    rng = np.random.default_rng(s["seed"])
    n = s["size"]
    summary = []
    for alpha in (0.1, 1.0, 10.0):
        violations = 0
        for _ in range(s["trials"]):
            A = rng.standard_normal((n, n))
            B = rng.standard_normal((n, n))
            rep = block_lemma_check(A + A.T, B + B.T, alpha, tol=s["tol_re"], tol_zero=s["tol_zero"])
            violations += len(rep.imaginary_axis_violations)
        summary.append({"alpha": alpha, "trials": s["trials"], "size": n, "violations": violations})
    write_json(out / "block_lemma.json", _manifest(cfg, "block-lemma", results=summary))
    return {f"block_lemma_alpha_{r['alpha']:g}": r["violations"] == 0 for r in summary}


def cmd_spectrum(cfg: RunConfig) -> int:
    """Spectra of L1, L2 and L0 on a coarse grid, with claim checks."""
    from .plotting import plot_spectra

    out = _outdir(cfg, "spectrum")
    s = cfg.section("spectrum")
    wall = obtain_wall(cfg, "spectrum")
    tol = {"tol_zero": s["tol_zero"], "tol_re": s["tol_re"]}
    L1, L2 = assemble_L1(wall), assemble_L2(wall)
    r1, r2 = spectrum(L1, **tol), spectrum(L2, **tol)
    alphas = s["alphas"] if s["alphas"] is not None else [wall.params.alpha]
    reports = [r1, r2]
    claims = {"L1." + k: v for k, v in r1.claims.items()}
    claims.update({"L2." + k: v for k, v in r2.claims.items()})
    write_json(out / "spectrum_L1.json", {**r1.to_dict(), "manifest": _manifest(cfg, "spectrum", tol)})
    write_json(out / "spectrum_L2.json", {**r2.to_dict(), "manifest": _manifest(cfg, "spectrum", tol)})
    for alpha in alphas:
        L0 = assemble_L0(wall, alpha, L1, L2)
        r0 = spectrum(L0, **tol)
        kernel = np.concatenate([np.zeros(wall.grid.n_points), wall.derivative])
        extra = {"kernel_residual": float(np.linalg.norm(L0.entries @ kernel) / np.linalg.norm(kernel))}
        if alpha == 0:
            union = np.sort(np.concatenate([r1.eigenvalues.real, r2.eigenvalues.real]))
            extra["union_defect"] = float(np.max(np.abs(np.sort(r0.eigenvalues.real) - union)))
            r0.claims["union_of_blocks"] = extra["union_defect"] <= s["tol_re"] * L0.norm
        name = "spectrum_L0.json" if len(alphas) == 1 else f"spectrum_L0_alpha{alpha:g}.json"
        write_json(out / name, {**r0.to_dict(), **extra, "manifest": _manifest(cfg, "spectrum", tol)})
        reports.append(r0)
        claims.update({f"L0(alpha={alpha:g}).{k}": v for k, v in r0.claims.items()})
        print(f"L0 alpha={alpha:g}: max Re of nonzero eigenvalues {r0.max_real_nonzero:.6e}, "
              f"kernel residual {extra['kernel_residual']:.3e}")
    if s["block_lemma"]:
        claims.update(_block_lemma_mode(cfg, out))
    plot_spectra(reports, out / "spectrum.svg", description=f"config_hash={config_hash(cfg.recipe)}")
    print(f"L1 largest eigenvalue {r1.eigenvalues.real.max():.6e}")
    print(f"L2 kernel dimension {r2.kernel_dimension_estimate}, gap {r2.spectral_gap:.6e}")
    for k, v in claims.items():
        print(f"{'PASS' if v else 'FAIL'}  {k}")
    write_json(out / "manifest.json", _manifest(cfg, "spectrum-run", tol, claims=claims))
    return EXIT_OK


def _initial_state(cfg, wall) -> State:
    init = cfg.section("evolve")["initial"]
    grid = wall.grid
    if init["kind"] == "zero":
        return State.zero(grid)
    amp = init["amplitude"]
    if init["kind"] == "kernel":
        return State.from_arrays(grid, np.zeros(grid.n_points), amp * wall.derivative)
    rng = np.random.default_rng(init["seed"])
    x = grid.nodes
    envelope = np.exp(-(x / 4.0) ** 2)
    fields = []
    for _ in range(2):
        u = envelope * rng.standard_normal(grid.n_points)
        u = grid.multiply(u, np.exp(-(grid.xi / 2.0) ** 2))
        fields.append(amp * u / np.max(np.abs(u)))
    return State.from_arrays(grid, fields[0], fields[1])


def cmd_evolve(cfg: RunConfig) -> int:
    """Integrate the forced dynamics from configured initial data."""
    from .plotting import plot_heatmap

    out = _outdir(cfg, "evolve")
    e = cfg.section("evolve")
    wall = obtain_wall(cfg, "evolve")
    grid = wall.grid
    forcing = forcing_from(cfg, grid)
    config = IntegratorConfig(cfg.dt("evolve"), e["scheme"], e["dealias"], e["max_phi"], e["startup"])
    n_steps = config.steps_for(e["t_final"])
    frames = max(2, min(e["heatmap_frames"], n_steps + 1))
    stride = max(1, n_steps // (frames - 1))
    frame_steps = list(range(0, n_steps + 1, stride))
    if frame_steps[-1] != n_steps:
        frame_steps.append(n_steps)
    times = [k * config.dt for k in frame_steps]
    initial = _initial_state(cfg, wall)
    traj = evolve(initial, e["t_final"], wall, forcing, wall.params, config,
                  snapshot_times=times, raise_on_exit=False)
    n_snap = max(1, min(e["snapshots"], len(traj.states)))
    picks = sorted(set(np.linspace(0, len(traj.states) - 1, n_snap).round().astype(int).tolist()))
    traj.write_csv(out, picks if traj.states else [])
    tag = config_hash(cfg.recipe)
    if traj.states:
        field = np.array([s.vartheta.values for s in traj.states])
        t_axis = np.array([s.time for s in traj.states])
        plot_heatmap(t_axis, grid.nodes, field, out / "vartheta_heatmap.svg",
                     description=f"config_hash={tag}")
    d = traj.diagnostics
    traj.write_manifest(out / "manifest.json", {
        "manifest": _manifest(cfg, "evolve-run", {"max_phi": e["max_phi"]}),
        "drift_final": float(d["drift"][-1]) if len(d["drift"]) else None,
    })
    print(f"evolve: {n_steps} steps of dt={config.dt:g} to t={e['t_final']:g}")
    if traj.exit_time is not None:
        print(f"validity exit: |phi| exceeded {e['max_phi']:.4f} at t = {traj.exit_time:.6g}")
        return EXIT_VALIDITY
    _table([
        ("final_max_phi", float(d["max_phi"][-1])),
        ("final_norm", float(d["norm"][-1])),
        ("final_drift", float(d["drift"][-1])),
    ])
    return EXIT_OK


def cmd_periodic(cfg: RunConfig) -> int:
    """Continuation of periodic orbits in the forcing amplitude."""
    from .plotting import plot_gamma_curve

    out = _outdir(cfg, "periodic")
    p = cfg.section("periodic")
    wall = obtain_wall(cfg, "periodic")
    forcing = forcing_from(cfg, wall.grid)
    config = IntegratorConfig(cfg.dt("periodic"), p["scheme"])
    setup = PoincareSetup(wall, forcing, config, projection_modes=p["projection_modes"],
                          tolerance=p["tolerance"])
    result = continuation(p["lambda_max"], p["n_steps"], setup)
    checks = [verify_orbit(o, setup, p["verify_periods"]) for o in result]
    report = {"completed": result.completed, "lambda_reached": result.lambda_reached,
              "message": result.message, "orbits": checks, "attempts": result.attempts}
    if p["mirror"] and p["lambda_max"] != 0:
        mirror_setup = PoincareSetup(wall, forcing, config, projection_modes=p["projection_modes"],
                                     tolerance=p["tolerance"])
        mirrored = continuation(-p["lambda_max"], p["n_steps"], mirror_setup)
        report["gamma_evenness"] = gamma_evenness(result.orbits, mirrored.orbits)
    tag = config_hash(cfg.recipe)
    save_orbits(result.orbits, out / "orbits.npz", wall.grid, cfg.recipe)
    curve = result.gamma_curve()
    np.savetxt(out / "gamma.csv", curve, delimiter=",", header="lambda,gamma", comments="",
               fmt="%.17g")
    plot_gamma_curve(curve[:, 0], curve[:, 1], out / "gamma.svg", description=f"config_hash={tag}")
    write_json(out / "verification.json", report)
    write_json(out / "manifest.json", _manifest(
        cfg, "periodic-run", {"fixed_point": p["tolerance"]},
        completed=result.completed, orbits=len(result)))
    print(f"{'lambda':>12} {'gamma':>14} {'residual':>10} {'iters':>5} {'reint(3T)':>10}")
    for o, c in zip(result, checks):
        reint = max(c["continuous"]) if c["continuous"] else 0.0
        print(f"{o.lam:12.6g} {o.gamma:14.6e} {o.residual_norm:10.2e} {o.newton_iterations:5d} "
              f"{reint:10.2e}")
    if not result.completed or not result.nontrivial:
        print(f"continuation stopped: {result.message or 'no nontrivial orbit'}")
        return EXIT_NO_ORBIT
    return EXIT_OK


COMMANDS = {"wall": cmd_wall, "spectrum": cmd_spectrum, "evolve": cmd_evolve, "periodic": cmd_periodic}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="neelwall",
        description="Static Neel walls, their linearization and forced periodic dynamics.",
        epilog=f"Output root: --output, then the config key 'output', then ${OUTPUT_ENV}.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func in COMMANDS.items():
        p = sub.add_parser(name, help=func.__doc__ or name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--set", dest="overrides", action="append", default=[],
                       metavar="KEY=VALUE", help="override a configuration key, e.g. grid.n_points=2048")
        p.add_argument("--output", help="output root directory")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = RunConfig.from_sources(args.config, args.overrides, args.output)
    except ConfigError as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg)
    except (ConfigError, InvalidParameterError, ArchiveError) as err:
        print(f"configuration error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverFailure, EigenSolverError) as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER
    except ValidityError as err:
        print(f"validity exit: {err}", file=sys.stderr)
        return EXIT_VALIDITY


if __name__ == "__main__":
    sys.exit(main())
