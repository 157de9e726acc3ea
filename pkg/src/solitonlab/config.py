"""Run configuration: one JSON document, validated into dataclasses.

Every validation failure raises ConfigError carrying the dotted path of the
offending field (e.g. ``resolution.K``).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Optional

from .errors import ConfigError, SpecError
from .models import KINDS, ModelSpec

EXPERIMENTS = ("identities", "geodesic", "ledgers", "decay", "rho")


@dataclass
class Resolution:
    K: Optional[int] = None  # direct-solver grid; None = automatic
    step: float = 1e-3  # IVP step for the conservation check
    stencil_h: Optional[float] = None
    grid_count: int = 400


@dataclass
class Targets:
    distances: list = field(default_factory=lambda: [5.0, 10.0, 20.0, 40.0])
    angle: float = 0.0


@dataclass
class GeodesicParams:
    x0: Optional[list] = None
    v0: Optional[list] = None
    s_bar: float = 20.0
    variation_fields: int = 3
    multistart: int = 4


@dataclass
class RhoGrid:
    side: int = 7
    lo: float = 0.5
    hi: float = 3.0
    s_bars: list = field(default_factory=lambda: [1.0, 2.0, 4.0])
    c: Optional[float] = None  # None = first entry of c_values


@dataclass
class RunConfig:
    model: ModelSpec
    c_values: list = field(default_factory=lambda: [0.25])
    experiments: list = field(default_factory=lambda: list(EXPERIMENTS))
    resolution: Resolution = field(default_factory=Resolution)
    targets: Targets = field(default_factory=Targets)
    geodesic: GeodesicParams = field(default_factory=GeodesicParams)
    rho: RhoGrid = field(default_factory=RhoGrid)
    out: str = "out"
    seed: int = 0

    def to_dict(self):
        d = asdict(self)
        d["model"]["phi"] = list(self.model.phi)
        return d

    def with_overrides(self, only=None, out=None, seed=None):
        cfg = replace(self)
        if only is not None:
            cfg.experiments = [only]
        if out is not None:
            cfg.out = out
        if seed is not None:
            cfg.seed = seed
        return cfg.validate()

    # --- validation ---------------------------------------------------------

    def validate(self):
        try:
            self.model.validate()
        except SpecError as exc:
            raise ConfigError("model", str(exc)) from exc
        if not self.c_values:
            raise ConfigError("c_values", "need at least one value")
        for i, c in enumerate(self.c_values):
            _positive(f"c_values[{i}]", c)
        if not self.experiments:
            raise ConfigError("experiments", "nothing selected")
        for i, e in enumerate(self.experiments):
            if e not in EXPERIMENTS:
                raise ConfigError(f"experiments[{i}]", f"unknown experiment {e!r}; choose from {EXPERIMENTS}")
        r = self.resolution
        if r.K is not None and (not isinstance(r.K, int) or r.K < 2):
            raise ConfigError("resolution.K", f"must be an integer >= 2, got {r.K!r}")
        _positive("resolution.step", r.step)
        if r.stencil_h is not None:
            _positive("resolution.stencil_h", r.stencil_h)
        if not isinstance(r.grid_count, int) or r.grid_count < 1:
            raise ConfigError("resolution.grid_count", "must be a positive integer")
        needs_targets = {"ledgers", "decay"} & set(self.experiments)
        if needs_targets:
            if not self.targets.distances:
                raise ConfigError("targets.distances", "need at least one distance")
            for i, d in enumerate(self.targets.distances):
                if not _finite(d) or d <= 2:
                    raise ConfigError(f"targets.distances[{i}]", "must exceed 2 (trapezoid profile support)")
            if "decay" in self.experiments and len(set(self.targets.distances)) < 3:
                raise ConfigError("targets.distances", "decay needs 3 or more distinct distances")
            if self.model.kind == "euclidean":
                raise ConfigError("experiments", "ledgers and decay need a soliton model")
        if not _finite(self.targets.angle):
            raise ConfigError("targets.angle", "must be finite")
        g = self.geodesic
        _positive("geodesic.s_bar", g.s_bar)
        for name in ("x0", "v0"):
            v = getattr(g, name)
            if v is not None and len(v) != self.model_dim:
                raise ConfigError(f"geodesic.{name}", f"needs {self.model_dim} components")
        if not isinstance(g.variation_fields, int) or g.variation_fields < 0:
            raise ConfigError("geodesic.variation_fields", "must be a non-negative integer")
        if not isinstance(g.multistart, int) or g.multistart < 1:
            raise ConfigError("geodesic.multistart", "must be a positive integer")
        q = self.rho
        if not isinstance(q.side, int) or q.side < 1:
            raise ConfigError("rho.side", "must be a positive integer")
        if not (_finite(q.lo) and _finite(q.hi) and q.lo <= q.hi):
            raise ConfigError("rho.lo", "need finite lo <= hi")
        if not q.s_bars:
            raise ConfigError("rho.s_bars", "need at least one value")
        for i, s in enumerate(q.s_bars):
            _positive(f"rho.s_bars[{i}]", s)
        if q.c is not None:
            _positive("rho.c", q.c)
        if not isinstance(self.seed, int) or self.seed < 0:
            raise ConfigError("seed", "must be a non-negative integer")
        if not self.out:
            raise ConfigError("out", "empty output directory")
        return self

    @property
    def model_dim(self):
        m = self.model
        return {"cigar": 2, "cigar_product": 2 + m.k}.get(m.kind, m.n)


def _finite(v):
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


def _positive(path, v):
    if not _finite(v) or v <= 0:
        raise ConfigError(path, f"must be a positive number, got {v!r}")


def _section(cls, raw, path):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(path, "must be an object")
    known = {f.name for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"{path}.{key}", "unknown field")
    return cls(**raw)


def config_from_dict(raw: dict) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    for key in raw:
        if key not in known:
            raise ConfigError(key, "unknown field")
    if "model" not in raw:
        raise ConfigError("model", "missing")
    m = raw["model"]
    if isinstance(m, str):
        m = {"kind": m}
    if not isinstance(m, dict):
        raise ConfigError("model", "must be an object or a kind name")
    if m.get("kind") not in KINDS:
        raise ConfigError("model.kind", f"must be one of {KINDS}")
    mfields = {f.name for f in fields(ModelSpec)}
    for key in m:
        if key not in mfields:
            raise ConfigError(f"model.{key}", "unknown field")
    m = dict(m)
    if "phi" in m:
        m["phi"] = tuple(m["phi"])
    cfg = RunConfig(
        model=ModelSpec(**m),
        c_values=list(raw.get("c_values", [0.25])),
        experiments=list(raw.get("experiments", EXPERIMENTS)),
        resolution=_section(Resolution, raw.get("resolution"), "resolution"),
        targets=_section(Targets, raw.get("targets"), "targets"),
        geodesic=_section(GeodesicParams, raw.get("geodesic"), "geodesic"),
        rho=_section(RhoGrid, raw.get("rho"), "rho"),
        out=raw.get("out", "out"),
        seed=raw.get("seed", 0),
    )
    return cfg.validate()


def load_config(path) -> RunConfig:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except OSError as exc:
        raise ConfigError("--config", f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError("--config", f"invalid JSON: {exc}") from exc
    return config_from_dict(raw)
