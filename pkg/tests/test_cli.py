import json

import numpy as np
import pytest

from neelwall.cli import main

SMALL = ["--set", "grid.half_length=25", "--set", "grid.n_points=256"]
SPEC_SMALL = ["--set", "spectrum.grid.half_length=25", "--set", "spectrum.grid.n_points=256"]
PER_SMALL = ["--set", "periodic.grid.half_length=15", "--set", "periodic.grid.n_points=64",
             "--set", "periodic.dt=0.002", "--set", "periodic.projection_modes=32"]


def test_wall_defaults(tmp_path, capsys):
    assert main(["wall", "--output", str(tmp_path)]) == 0
    out = tmp_path / "wall"
    for name in ("wall.npz", "wall_profile.csv", "wall.svg", "manifest.json"):
        assert (out / name).is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["el_residual_norm"] <= 1e-8
    assert manifest["warnings"] == []
    assert {"config_hash", "code_version", "tolerances"} <= set(manifest)
    text = capsys.readouterr().out
    assert "el_residual" in text and "tail_value" in text
    assert (out / "wall.svg").read_text().lstrip().startswith("<?xml")


def test_wall_odd_grid_rejected(tmp_path, capsys):
    assert main(["wall", "--output", str(tmp_path), "--set", "grid.n_points=4095"]) == 1
    assert "even" in capsys.readouterr().err


def test_wall_small_domain_warns(tmp_path, capsys):
    code = main(["wall", "--output", str(tmp_path), "--set", "grid.half_length=5",
                 "--set", "grid.n_points=128"])
    assert code == 0
    manifest = json.loads((tmp_path / "wall" / "manifest.json").read_text())
    assert any("domain too small" in w for w in manifest["warnings"])
    assert "warning: domain too small" in capsys.readouterr().out


def test_solver_failure_exit(tmp_path):
    assert main(["wall", "--output", str(tmp_path), *SMALL, "--set", "solver.max_flow_iterations=1"]) == 2


def test_unknown_key_exit(tmp_path, capsys):
    assert main(["wall", "--output", str(tmp_path), "--set", "grid.cells=3"]) == 1
    assert "unknown configuration key" in capsys.readouterr().err


def test_config_file_and_env(tmp_path, monkeypatch):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"grid": {"half_length": 25.0, "n_points": 256}}))
    monkeypatch.setenv("NEELWALL_OUTPUT", str(tmp_path / "env"))
    assert main(["wall", "--config", str(cfg)]) == 0
    assert (tmp_path / "env" / "wall" / "wall.npz").is_file()


def test_spectrum_defaults(tmp_path, capsys):
    assert main(["spectrum", "--output", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "FAIL" not in out
    assert out.count("PASS") == 5
    for name in ("spectrum_L1.json", "spectrum_L2.json", "spectrum_L0.json", "spectrum.svg"):
        assert (tmp_path / "spectrum" / name).is_file()


def test_spectrum_zero_alpha_and_block_lemma(tmp_path, capsys):
    code = main(["spectrum", "--output", str(tmp_path), *SPEC_SMALL, "--set", "parameters.alpha=0",
                 "--set", "spectrum.block_lemma=true", "--set", "spectrum.trials=10"])
    assert code == 0
    out = capsys.readouterr().out
    assert "PASS  L0(alpha=0).union_of_blocks" in out
    assert "FAIL" not in out
    data = json.loads((tmp_path / "spectrum" / "spectrum_L0.json").read_text())
    assert data["union_defect"] <= 1e-8 * data["operator_norm"]
    lemma = json.loads((tmp_path / "spectrum" / "block_lemma.json").read_text())
    assert all(r["violations"] == 0 for r in lemma["results"])


def test_spectrum_reuses_wall_archive(tmp_path):
    assert main(["wall", "--output", str(tmp_path), *SMALL]) == 0
    archive = tmp_path / "wall" / "wall.npz"
    assert main(["spectrum", "--output", str(tmp_path / "s"), *SPEC_SMALL,
                 "--set", f'wall_archive="{archive}"']) == 0
    assert main(["spectrum", "--output", str(tmp_path / "s"), "--set",
                 f'wall_archive="{tmp_path / "nope.npz"}"']) == 1


def test_evolve_flatline(tmp_path):
    assert main(["evolve", "--output", str(tmp_path), "--set", "evolve.t_final=0.1"]) == 0
    out = tmp_path / "evolve"
    snaps = sorted(out.glob("snapshot_*.csv"))
    assert snaps
    for path in snaps:
        data = np.loadtxt(path, delimiter=",")
        assert np.max(np.abs(data[:, 1:3])) < 1e-12
    assert (out / "vartheta_heatmap.svg").is_file()
    assert json.loads((out / "manifest.json").read_text())["exit_time"] is None


def test_evolve_constant_field_drift(tmp_path):
    code = main(["evolve", "--output", str(tmp_path), "--set", "evolve.t_final=0.1",
                 "--set", "forcing.kind=zero", "--set", "forcing.gamma=0.01"])
    assert code == 0
    with open(tmp_path / "evolve" / "diagnostics.csv") as fh:
        header = fh.readline().strip().split(",")
    data = np.loadtxt(tmp_path / "evolve" / "diagnostics.csv", delimiter=",", skiprows=1)
    drift = data[:, header.index("drift")]
    assert np.all(np.diff(drift) > 0)


def test_evolve_validity_exit(tmp_path, capsys):
    code = main(["evolve", "--output", str(tmp_path), "--set", "evolve.dt=0.05",
                 "--set", "evolve.t_final=2", "--set", "forcing.lambda=5"])
    assert code == 3
    manifest = json.loads((tmp_path / "evolve" / "manifest.json").read_text())
    assert 0 < manifest["exit_time"] <= 2
    assert "validity exit" in capsys.readouterr().out


@pytest.mark.slow
def test_periodic_small_and_deterministic(tmp_path):
    args = ["periodic", *PER_SMALL, "--set", "periodic.lambda_max=0.02", "--set", "periodic.n_steps=2"]
    assert main([*args, "--output", str(tmp_path / "a")]) == 0
    assert main([*args, "--output", str(tmp_path / "b")]) == 0
    a, b = tmp_path / "a" / "periodic", tmp_path / "b" / "periodic"
    for name in ("gamma.csv", "orbits.npz", "verification.json", "gamma.svg"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    curve = np.loadtxt(a / "gamma.csv", delimiter=",", skiprows=1)
    assert curve.shape == (3, 2)
    assert curve[0, 1] == 0.0


@pytest.mark.slow
def test_periodic_huge_amplitude_partial(tmp_path, capsys):
    code = main(["periodic", *PER_SMALL, "--output", str(tmp_path), "--set", "periodic.lambda_max=10",
                 "--set", "periodic.n_steps=2"])
    assert code == 4
    report = json.loads((tmp_path / "periodic" / "verification.json").read_text())
    assert report["completed"] is False
    assert 0 < report["lambda_reached"] < 10
    curve = np.loadtxt(tmp_path / "periodic" / "gamma.csv", delimiter=",", skiprows=1)
    assert curve.shape[0] >= 2
    assert "continuation stopped" in capsys.readouterr().out


def test_version_flag(capsys):
    with pytest.raises(SystemExit) as info:
        main(["--version"])
    assert info.value.code == 0
    assert "neelwall" in capsys.readouterr().out
