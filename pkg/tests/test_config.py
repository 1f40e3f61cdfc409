import json

import pytest

from neelwall.config import ConfigError, RunConfig, apply_override


def test_defaults_validate(tmp_path, monkeypatch):
    monkeypatch.delenv("NEELWALL_OUTPUT", raising=False)
    cfg = RunConfig.from_sources()
    assert cfg.grid().n_points == 4096
    assert cfg.grid("spectrum").half_length == 50.0
    assert cfg.dt("periodic") == pytest.approx(5e-4)
    assert str(cfg.output_root) == "neelwall_output"
    monkeypatch.setenv("NEELWALL_OUTPUT", str(tmp_path))
    assert cfg.output_root == tmp_path
    assert RunConfig.from_sources(output="x").output_root.name == "x"


def test_physical_parameters_take_precedence():
    cfg = RunConfig.from_dict({"physical": {"d": 2.0, "delta": 1.0, "Q": 0.25, "alpha": 1.0}})
    p = cfg.params
    assert (p.kappa, p.epsilon, p.alpha) == (1.0, 0.25, 1.0)


@pytest.mark.parametrize("doc,fragment", [
    ({"grid": {"n_points": 4095}}, "even"),
    ({"gird": {}}, "unknown"),
    ({"grid": {"n_pts": 8}}, "unknown"),
    ({"parameters": {"epsilon": -1}}, "epsilon"),
    ({"physical": {"d": 1, "delta": 0, "Q": 0.1}}, "delta"),
    ({"physical": {"d": 1, "delta": 1, "Q": 0.1, "x": 1}}, "unknown"),
    ({"forcing": {"kind": "square"}}, "forcing.kind"),
    ({"forcing": {"kind": "tabulated"}}, "table"),
    ({"periodic": {"dt": 0.3}}, "divide"),
    ({"evolve": {"scheme": "rk4"}}, "scheme"),
    ({"evolve": {"max_phi": 2.0}}, "max_phi"),
    ({"evolve": {"t_final": 1.0, "dt": 0.3}}, "multiple"),
    ({"spectrum": None}, "null"),
    ({"solver": {"tolerance": 0}}, "tolerances"),
])
def test_invalid_documents(doc, fragment):
    with pytest.raises(ConfigError, match=fragment):
        RunConfig.from_dict(doc)


def test_overrides_and_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"grid": {"half_length": 30.0}}))
    cfg = RunConfig.from_sources(path, ["grid.n_points=512", "forcing.kind=cosine"])
    assert cfg.grid().half_length == 30.0 and cfg.grid().n_points == 512
    assert cfg.doc["forcing"]["kind"] == "cosine"
    with pytest.raises(ConfigError):
        apply_override(cfg.doc, "grid.n_points")
    with pytest.raises(ConfigError, match="not found"):
        RunConfig.from_sources(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError, match="JSON"):
        RunConfig.from_sources(bad)
