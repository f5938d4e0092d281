"""JSON experiment configuration.

A config is one JSON object::

    {
      "n": 3, "m": 1, "seed": 0,
      "curve": {"kind": "union_of_lines", "directions": [[1, 0, 0], [0, 1, 0]],
                "points": [[0, 0, 2.5], [0, 0, -2.5]], "t_range": [-3, 3]},
      "grid": {"dims": [24, 24, 24], "origin": [-1, -1, -1], "spacing": [0.087, 0.087, 0.087]},
      "geometry": {"s_step": null, "N_t": 256, "N_dir": 2048},
      "cutoff": {"delta_sigma": 0.1, "transition_width": 0.1},
      "phantom": {"kind": "bump_tensor", "params": {"widths": 0.4}},
      "probes": [{"x": [0, 0, 0], "xi": [1, 0, 0]}],
      "recon": {"blocks": 1}, "kt": {"radius": 1.0}, "probe": {"lambdas": [25, 38, 50, 75]}
    }

``grid`` may instead be ``{"N": 48, "half_width": 1.0}`` (a centered cube).
``curve`` is either ``{"components": [...]}`` as produced by ``Curve.to_dict``
or one of the shorthands ``union_of_lines``, ``circle``, ``helix``, ``spline``
and ``union`` (with ``"parts": [curve, ...]``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import numpy as np

from .errors import ConfigParse
from .geometry import Curve
from .microlocal import SymbolCutoffConfig
from .xray import LineGeometry, TensorField

_TOP_KEYS = {"n", "m", "seed", "curve", "grid", "geometry", "cutoff", "phantom", "probes", "recon", "kt", "probe"}


@dataclass(frozen=True)
class GridSpec:
    dims: tuple[int, ...]
    origin: tuple[float, ...]
    spacing: tuple[float, ...]

    def template(self, n: int, m: int) -> TensorField:
        return TensorField.zeros(n, m, self.dims, self.origin, self.spacing)


@dataclass(frozen=True)
class PhantomSpec:
    kind: str = "bump_tensor"
    params: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ReconSpec:
    blocks: int = 1
    pad: int = 2
    core_radius: float = 0.0
    tube_radius_voxels: float = 3.0
    apron: int = 0
    truth_pad: int = 1


@dataclass(frozen=True)
class KTSpec:
    center: tuple[float, ...] | None = None
    radius: float = 1.0
    n_planes: int = 100
    n_points: int = 10


@dataclass(frozen=True)
class ProbeSpec:
    x: tuple[float, ...] | None = None
    xi: tuple[float, ...] | None = None
    lambdas: tuple[float, ...] = (8 * math.pi, 12 * math.pi, 16 * math.pi, 24 * math.pi)
    phantom_width: float = 0.6
    grid_size: int = 64
    n_t: int = 4096


@dataclass(frozen=True)
class ExperimentConfig:
    n: int
    m: int
    curve: Curve
    grid: GridSpec
    geometry: LineGeometry = LineGeometry()
    cutoff: SymbolCutoffConfig = SymbolCutoffConfig()
    phantom: PhantomSpec = PhantomSpec()
    seed: int = 0
    probes: tuple[tuple[np.ndarray, np.ndarray], ...] = ()
    recon: ReconSpec = ReconSpec()
    kt: KTSpec = KTSpec()
    probe: ProbeSpec = ProbeSpec()

    def template(self) -> TensorField:
        return self.grid.template(self.n, self.m)


def _need(d: dict, key: str, where: str):
    if key not in d:
        raise ConfigParse(f"{where}: missing key {key!r}")
    return d[key]


def _vec(v, length: int | None, where: str) -> tuple[float, ...]:
    try:
        a = np.asarray(v, dtype=float).reshape(-1)
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"{where}: expected a numeric vector ({e})") from None
    if length is not None and a.size != length:
        raise ConfigParse(f"{where}: expected {length} entries, got {a.size}")
    if not np.all(np.isfinite(a)):
        raise ConfigParse(f"{where}: non-finite entry")
    return tuple(float(x) for x in a)


def _dataclass_from(cls, d: Any, where: str, rename: dict | None = None):
    if d is None:
        return cls()
    if not isinstance(d, dict):
        raise ConfigParse(f"{where}: expected an object")
    rename = rename or {}
    names = {f.name for f in fields(cls)}
    kwargs = {}
    for k, v in d.items():
        name = rename.get(k, k)
        if name not in names:
            raise ConfigParse(f"{where}: unknown key {k!r}")
        kwargs[name] = tuple(v) if isinstance(v, list) else v
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"{where}: {e}") from None


def parse_curve(d: Any, n: int | None = None, where: str = "curve") -> Curve:
    if not isinstance(d, dict):
        raise ConfigParse(f"{where}: expected an object")
    try:
        if "components" in d:
            curve = Curve.from_dict(d)
        else:
            kind = _need(d, "kind", where)
            if kind == "union_of_lines":
                curve = Curve.union_of_lines(_need(d, "directions", where), d.get("points"),
                                             tuple(d.get("t_range", (-1.0, 1.0))))
            elif kind == "circle":
                curve = Curve.circle(_need(d, "center", where), float(_need(d, "radius", where)),
                                     d.get("normal", (0.0, 0.0, 1.0)))
            elif kind == "helix":
                curve = Curve.helix(_need(d, "center", where), float(_need(d, "radius", where)),
                                    float(_need(d, "pitch", where)), d.get("axis", (0.0, 0.0, 1.0)),
                                    tuple(d.get("t_range", (0.0, 4 * math.pi))))
            elif kind == "spline":
                curve = Curve.spline(_need(d, "knots", where), bool(d.get("closed", False)))
            elif kind == "union":
                curve = Curve.union(*(parse_curve(p, n, f"{where}.parts[{i}]")
                                      for i, p in enumerate(_need(d, "parts", where))))
            else:
                raise ConfigParse(f"{where}: unknown curve kind {kind!r}")
    except ConfigParse:
        raise
    except (KeyError, TypeError, ValueError) as e:
        raise ConfigParse(f"{where}: {e}") from None
    if n is not None and curve.n != n:
        raise ConfigParse(f"{where}: curve lives in R^{curve.n}, config has n={n}")
    return curve


def _parse_grid(d: Any, n: int) -> GridSpec:
    if not isinstance(d, dict):
        raise ConfigParse("grid: expected an object")
    if "N" in d:
        N = int(d["N"])
        hw = float(d.get("half_width", 1.0))
        if N < 2 or hw <= 0:
            raise ConfigParse("grid: need N >= 2 and half_width > 0")
        return GridSpec((N,) * n, (-hw,) * n, (2 * hw / (N - 1),) * n)
    dims = _vec(_need(d, "dims", "grid"), n, "grid.dims")
    if any(k < 2 or k != int(k) for k in dims):
        raise ConfigParse("grid.dims: entries must be integers >= 2")
    origin = _vec(_need(d, "origin", "grid"), n, "grid.origin")
    spacing = _vec(_need(d, "spacing", "grid"), n, "grid.spacing")
    if any(s <= 0 for s in spacing):
        raise ConfigParse("grid.spacing: entries must be positive")
    return GridSpec(tuple(int(k) for k in dims), origin, spacing)


def parse_config(d: Any) -> ExperimentConfig:
    """Validate a decoded JSON object; raises ConfigParse on any problem."""
    if not isinstance(d, dict):
        raise ConfigParse("config: top level must be an object")
    unknown = set(d) - _TOP_KEYS
    if unknown:
        raise ConfigParse(f"config: unknown keys {sorted(unknown)}")
    try:
        n, m = int(_need(d, "n", "config")), int(_need(d, "m", "config"))
        seed = int(d.get("seed", 0))
    except (TypeError, ValueError) as e:
        raise ConfigParse(f"config: {e}") from None
    if n < 2 or m < 0:
        raise ConfigParse(f"config: need n >= 2 and m >= 0 (got n={n}, m={m})")
    curve = parse_curve(_need(d, "curve", "config"), n)
    grid = _parse_grid(_need(d, "grid", "config"), n)
    geom = _dataclass_from(LineGeometry, d.get("geometry"), "geometry", {"N_t": "n_t", "N_dir": "n_dir"})
    cutoff = _dataclass_from(SymbolCutoffConfig, d.get("cutoff"), "cutoff")
    ph = d.get("phantom") or {}
    if not isinstance(ph, dict) or not isinstance(ph.get("params", {}), dict):
        raise ConfigParse("phantom: expected {kind, params}")
    phantom = PhantomSpec(str(ph.get("kind", "bump_tensor")), dict(ph.get("params", {})))
    probes = []
    for i, p in enumerate(d.get("probes", [])):
        if not isinstance(p, dict):
            raise ConfigParse(f"probes[{i}]: expected an object")
        x = np.array(_vec(_need(p, "x", f"probes[{i}]"), n, f"probes[{i}].x"))
        xi = np.array(_vec(_need(p, "xi", f"probes[{i}]"), n, f"probes[{i}].xi"))
        probes.append((x, xi))
    return ExperimentConfig(
        n=n, m=m, curve=curve, grid=grid, geometry=geom, cutoff=cutoff, phantom=phantom, seed=seed,
        probes=tuple(probes),
        recon=_dataclass_from(ReconSpec, d.get("recon"), "recon"),
        kt=_dataclass_from(KTSpec, d.get("kt"), "kt"),
        probe=_dataclass_from(ProbeSpec, d.get("probe"), "probe"),
    )


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigParse(f"config file not found: {p}")
    try:
        d = json.loads(p.read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ConfigParse(f"{p}: {e}") from None
    return parse_config(d)
