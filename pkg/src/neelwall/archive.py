"""Self-describing archives for walls and periodic orbits.

Format (version 1): a numpy ``.npz`` file holding float64 arrays plus one
string entry ``manifest`` with a JSON document.  Arrays are stored verbatim,
so loading reproduces every value bit for bit.  ``allow_pickle`` is never
needed.

Wall archive arrays: ``w`` (decaying part of the phase), ``theta``,
``derivative``.  Orbit archive arrays: ``lam``, ``gamma``, ``residual``,
``iterations``, ``phi0`` and ``vartheta0`` (one row per orbit).
"""

from __future__ import annotations

import hashlib
import io
import json
import zipfile
from dataclasses import asdict, is_dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .dynamics import State
from .energy import PhaseProfile, WallProfile
from .params import Grid, RescaledParameters

FORMAT_VERSION = 1


class ArchiveError(ValueError):
    """Archive missing, of the wrong kind, or of an unsupported version."""


def _jsonable(obj):
    if is_dataclass(obj):
        return _jsonable(asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, complex):
        return [obj.real, obj.imag]
    return obj


def to_json(obj, **kw) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, **kw)


def config_hash(config) -> str:
    return hashlib.sha256(to_json(config).encode()).hexdigest()[:16]


def make_manifest(kind: str, config=None, tolerances=None, **extra) -> dict:
    out = {
        "kind": kind,
        "format_version": FORMAT_VERSION,
        "code_version": __version__,
        "config_hash": config_hash(config) if config is not None else None,
        "tolerances": tolerances or {},
    }
    out.update(extra)
    return _jsonable(out)


def _write(path, manifest, arrays):
    # same layout as np.savez, but with fixed entry timestamps so that
    # identical runs produce identical files
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    entries = {"manifest": np.array(json.dumps(manifest, sort_keys=True)), **arrays}
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        for name, value in entries.items():
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asanyarray(value), allow_pickle=False)
            zf.writestr(zipfile.ZipInfo(f"{name}.npy", date_time=(1980, 1, 1, 0, 0, 0)), buf.getvalue())
    return path


def _read(path, kind):
    try:
        data = np.load(path, allow_pickle=False)
    except (OSError, ValueError) as err:
        raise ArchiveError(f"cannot read archive {path}: {err}") from err
    with data:
        manifest = json.loads(str(data["manifest"]))
        if manifest.get("kind") != kind:
            raise ArchiveError(f"{path} holds a {manifest.get('kind')!r} record, expected {kind!r}")
        if manifest.get("format_version") != FORMAT_VERSION:
            raise ArchiveError(f"unsupported archive version {manifest.get('format_version')}")
        arrays = {k: data[k] for k in data.files if k != "manifest"}
    return manifest, arrays


def save_wall(wall: WallProfile, path, config=None, **extra) -> Path:
    diag = {k: v for k, v in wall.diagnostics.items() if k != "history"}
    manifest = make_manifest(
        "wall",
        config,
        tolerances={"el_residual": 1e-8},
        grid=wall.grid.describe(),
        parameters=asdict(wall.params),
        el_residual_norm=wall.el_residual_norm,
        tail_value=wall.tail_value,
        energy=wall.energy,
        energy_terms=wall.energy_terms,
        diagnostics=diag,
        **extra,
    )
    arrays = {"w": wall.profile.w, "theta": wall.theta, "derivative": wall.derivative}
    return _write(path, manifest, arrays)


def load_wall(path) -> WallProfile:
    manifest, arrays = _read(path, "wall")
    grid = Grid(**manifest["grid"])
    params = RescaledParameters(**manifest["parameters"])
    profile = PhaseProfile(grid, arrays["w"])
    derivative = arrays["derivative"]
    derivative.setflags(write=False)
    return WallProfile(
        profile=profile,
        derivative=derivative,
        params=params,
        el_residual_norm=manifest["el_residual_norm"],
        tail_value=manifest["tail_value"],
        energy=manifest["energy"],
        energy_terms=manifest["energy_terms"],
        diagnostics=manifest.get("diagnostics", {}),
    )


def save_orbits(orbits, path, grid: Grid, config=None, **extra) -> Path:
    orbits = list(orbits)
    n = grid.n_points
    manifest = make_manifest(
        "orbits",
        config,
        tolerances={"fixed_point": 1e-8, "pin": 1e-12},
        grid=grid.describe(),
        count=len(orbits),
        monodromy_radius=[o.monodromy_spectral_radius_on_range for o in orbits],
        **extra,
    )
    arrays = {
        "lam": np.array([o.lam for o in orbits], dtype=float),
        "gamma": np.array([o.gamma for o in orbits], dtype=float),
        "residual": np.array([o.residual_norm for o in orbits], dtype=float),
        "iterations": np.array([o.newton_iterations for o in orbits], dtype=np.int64),
        "phi0": np.array([o.initial_state.phi.values for o in orbits]).reshape(-1, n),
        "vartheta0": np.array([o.initial_state.vartheta.values for o in orbits]).reshape(-1, n),
    }
    return _write(path, manifest, arrays)


def load_orbits(path) -> list:
    from .periodic import PeriodicOrbit

    manifest, a = _read(path, "orbits")
    grid = Grid(**manifest["grid"])
    radii = manifest.get("monodromy_radius") or [None] * len(a["lam"])
    return [
        PeriodicOrbit(
            lam=float(a["lam"][i]),
            gamma=float(a["gamma"][i]),
            initial_state=State.from_arrays(grid, a["phi0"][i], a["vartheta0"][i]),
            residual_norm=float(a["residual"][i]),
            newton_iterations=int(a["iterations"][i]),
            monodromy_spectral_radius_on_range=radii[i],
        )
        for i in range(len(a["lam"]))
    ]


def write_json(path, data) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(to_json(data, indent=2) + "\n")
    return path
