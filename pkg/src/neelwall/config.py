"""Run configuration: one JSON document per run, validated before any work.

Every section is optional; omitted keys take the defaults below.  Unknown
keys anywhere are an error.  Dotted overrides (``evolve.dt=0.001``) are
applied on top of the document, values parsed as JSON when possible.
"""

from __future__ import annotations

import copy
import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

from .dynamics import FORCING_KINDS, SCHEMES, STARTUPS
from .params import Grid, InvalidParameterError, PhysicalParameters, RescaledParameters, rescale

OUTPUT_ENV = "NEELWALL_OUTPUT"


class ConfigError(ValueError):
    """The run configuration is malformed or violates an invariant."""


DEFAULTS = {
    "parameters": {"kappa": 1.0, "epsilon": 0.1, "alpha": 0.5},
    "physical": None,
    "grid": {"half_length": 200.0, "n_points": 4096},
    "solver": {
        "flow_tolerance": 1e-3,
        "tolerance": 1e-8,
        "max_flow_iterations": 20000,
        "max_newton_iterations": 40,
        "tail_threshold": 0.05,
    },
    "wall_archive": None,
    "spectrum": {
        "grid": {"half_length": 50.0, "n_points": 1024},
        "alphas": None,
        "tol_zero": 1e-6,
        "tol_re": 1e-8,
        "block_lemma": False,
        "trials": 100,
        "size": 50,
        "seed": 0,
    },
    "forcing": {
        "kind": "sine",
        "period": 1.0,
        "lambda": 0.0,
        "gamma": 0.0,
        "table": None,
    },
    "evolve": {
        "grid": {"half_length": 25.0, "n_points": 256},
        "t_final": 1.0,
        "dt": None,
        "scheme": "bdf2",
        "startup": "richardson",
        "dealias": False,
        "max_phi": math.pi / 4,
        "snapshots": 5,
        "heatmap_frames": 101,
        "initial": {"kind": "zero", "amplitude": 0.0, "seed": 0},
    },
    "periodic": {
        "grid": {"half_length": 25.0, "n_points": 256},
        "lambda_max": 0.05,
        "n_steps": 10,
        "dt": None,
        "scheme": "bdf2",
        "projection_modes": 64,
        "tolerance": 1e-8,
        "verify_periods": 3,
        "mirror": False,
    },
    "output": None,
}


def _merge(base, update, path=""):
    if not isinstance(update, dict):
        raise ConfigError(f"section {path or '<root>'} must be an object")
    for key, value in update.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown configuration key {where!r}")
        if isinstance(base[key], dict):
            if value is None:
                raise ConfigError(f"section {where!r} cannot be null")
            _merge(base[key], value, where)
        else:
            base[key] = value
    return base


def _parse_value(text):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(doc: dict, assignment: str) -> dict:
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like key.sub=value")
    key, text = assignment.split("=", 1)
    parts = key.strip().split(".")
    nested = _parse_value(text)
    for part in reversed(parts):
        nested = {part: nested}
    return _merge(doc, nested)


@dataclass
class RunConfig:
    """Validated view of the configuration document."""

    doc: dict

    @classmethod
    def from_sources(cls, path=None, overrides=(), output=None) -> "RunConfig":
        doc = copy.deepcopy(DEFAULTS)
        if path is not None:
            try:
                user = json.loads(Path(path).read_text())
            except FileNotFoundError as err:
                raise ConfigError(f"config file not found: {path}") from err
            except json.JSONDecodeError as err:
                raise ConfigError(f"config file is not valid JSON: {err}") from err
            _merge(doc, user)
        for item in overrides:
            apply_override(doc, item)
        if output is not None:
            doc["output"] = output
        cfg = cls(doc)
        cfg.validate()
        return cfg

    @classmethod
    def from_dict(cls, user: dict) -> "RunConfig":
        doc = _merge(copy.deepcopy(DEFAULTS), user)
        cfg = cls(doc)
        cfg.validate()
        return cfg

    # -- typed views --------------------------------------------------------------

    @property
    def params(self) -> RescaledParameters:
        phys = self.doc["physical"]
        if phys:
            return rescale(PhysicalParameters(**phys))
        return RescaledParameters(**self.doc["parameters"])

    def grid(self, section: str | None = None) -> Grid:
        spec = self.doc["grid"] if section is None else self.doc[section]["grid"]
        return Grid(spec["half_length"], spec["n_points"])

    @property
    def output_root(self) -> Path:
        return Path(self.doc["output"] or os.environ.get(OUTPUT_ENV) or "neelwall_output")

    @property
    def recipe(self) -> dict:
        """The document without the output location: what determines results."""
        return {k: v for k, v in self.doc.items() if k != "output"}

    def section(self, name: str) -> dict:
        return self.doc[name]

    def dt(self, section: str) -> float:
        dt = self.doc[section]["dt"]
        return dt if dt is not None else self.doc["forcing"]["period"] / 2000

    def validate(self):
        d = self.doc
        try:
            if d["physical"] is not None:
                if not isinstance(d["physical"], dict):
                    raise ConfigError("physical must be an object with d, delta, Q, alpha")
                unknown = set(d["physical"]) - {"d", "delta", "Q", "alpha"}
                if unknown:
                    raise ConfigError(f"unknown configuration key(s) in physical: {sorted(unknown)}")
            self.params
            self.grid()
            for sec in ("spectrum", "evolve", "periodic"):
                self.grid(sec)
        except (InvalidParameterError, TypeError) as err:
            raise ConfigError(str(err)) from err
        f = d["forcing"]
        if f["kind"] not in FORCING_KINDS:
            raise ConfigError(f"forcing.kind must be one of {FORCING_KINDS}")
        if f["kind"] == "tabulated" and not f["table"]:
            raise ConfigError("forcing.table (CSV path) is required for tabulated forcing")
        if not (isinstance(f["period"], (int, float)) and f["period"] > 0):
            raise ConfigError("forcing.period must be positive")
        for sec in ("evolve", "periodic"):
            s = d[sec]
            if s["scheme"] not in SCHEMES:
                raise ConfigError(f"{sec}.scheme must be one of {SCHEMES}")
            dt = self.dt(sec)
            if not (isinstance(dt, (int, float)) and dt > 0):
                raise ConfigError(f"{sec}.dt must be positive")
        if d["evolve"]["startup"] not in STARTUPS:
            raise ConfigError(f"evolve.startup must be one of {STARTUPS}")
        steps = f["period"] / self.dt("periodic")
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError("periodic.dt must divide forcing.period")
        ev = d["evolve"]
        if ev["t_final"] <= 0:
            raise ConfigError("evolve.t_final must be positive")
        steps = ev["t_final"] / self.dt("evolve")
        if abs(steps - round(steps)) > 1e-9 * steps:
            raise ConfigError("evolve.t_final must be a multiple of evolve.dt")
        if not (0 < ev["max_phi"] < math.pi / 2):
            raise ConfigError("evolve.max_phi must lie in (0, pi/2)")
        if ev["initial"]["kind"] not in ("zero", "random", "kernel"):
            raise ConfigError("evolve.initial.kind must be zero, random or kernel")
        p = d["periodic"]
        if p["n_steps"] < 1 or p["projection_modes"] < 1 or p["verify_periods"] < 1:
            raise ConfigError("periodic.n_steps, projection_modes and verify_periods must be positive")
        s = d["spectrum"]
        if s["alphas"] is not None and not isinstance(s["alphas"], list):
            raise ConfigError("spectrum.alphas must be a list or null")
        if s["size"] < 1 or s["trials"] < 1:
            raise ConfigError("spectrum.size and spectrum.trials must be positive")
        sv = d["solver"]
        if sv["tolerance"] <= 0 or sv["flow_tolerance"] <= 0:
            raise ConfigError("solver tolerances must be positive")
