"""Witness points of small Ricci curvature along minimal cR-geodesics.

For each far target y: solve for the minimiser over [0, d(x, y)], evaluate
the curvature ledgers with the trapezoid profile, and search the final
stretch of the path (where d(gamma(s), y) <= d/2 is forced by the speed
bound |S| < sqrt(1 + 2c)) for the point of least |Rc|.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import InsufficientDataError, NonConvergenceError, UsageError
from .geodesic import PhiSpec, riemann_distance, solve_minimizer
from .geometry import curvature_pack
from .models import cigar_radius_at_distance
from .variation import (
    TestFunction,
    closed_bound,
    gradR_variant,
    inequality_369894,
    inequality_exeter,
    trace_index_inequality,
)

log = logging.getLogger(__name__)

DECAY_COLUMNS = ("model", "c", "d", "C", "J", "lhs", "paper_bound", "ric_at_z",
                 "K_ratio", "half_dist_ok", "converged")


@dataclass
class DecayRecord:
    model: str
    x: list
    y: list
    d: float
    c: float
    C: float
    J: float
    lhs: float
    paper_bound: float
    z: list
    s_z: float
    ric_at_z: float
    dist_z_y: float
    half_dist_ok: bool
    K_ratio: float
    converged: bool
    ledgers: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def valid(self):
        return self.converged

    def row(self):
        return {k: getattr(self, k) for k in DECAY_COLUMNS}


def ricci_norm(model, p):
    return np.sqrt(np.maximum(curvature_pack(model, p).ricci_norm2, 0.0))


def radial_targets(model, distances, angle=0.0):
    """Points at the given distances from the origin of the global chart.

    cigar: (sinh(d/2), 0); bryant: (d, 0, ...); cigar x R^k: the distance is
    split between the cigar factor and the first flat axis at ``angle``
    (0 = purely radial), using d^2 = d_cigar^2 + t^2.
    """
    out = []
    for d in distances:
        y = np.zeros(model.dim)
        if model.name == "cigar" or model.name.startswith("cigar_x_R"):
            y[0] = float(cigar_radius_at_distance(d * math.cos(angle)))
            if model.dim > 2:
                y[2] = d * math.sin(angle)
            elif angle != 0.0:
                raise UsageError("a split angle needs a flat factor")
        elif model.name.startswith("bryant"):
            y[0] = float(d)
        else:
            raise UsageError(f"no target schedule for {model.name}")
        out.append(y)
    return out


def exact_distance_from_origin(model, y):
    """Closed-form distance from the chart origin, or None."""
    y = np.asarray(y, dtype=float)
    if model.name == "cigar":
        return float(2 * np.arcsinh(np.linalg.norm(y)))
    if model.name.startswith("cigar_x_R"):
        return float(np.hypot(2 * np.arcsinh(np.linalg.norm(y[:2])), np.linalg.norm(y[2:])))
    if model.name.startswith("bryant"):
        return float(np.linalg.norm(y))
    return None


def _witness(model, sol, d, c):
    s = sol.path.s
    start = sol.s_bar - d / (2 * math.sqrt(1 + 2 * c))
    idx = np.nonzero(s >= start - 1e-12)[0]
    ric = ricci_norm(model, sol.samples[idx])
    j = idx[int(np.argmin(ric))]
    # rigorous length bound on the candidate: int_s^sbar |S| ds
    speed = np.sqrt(np.maximum(sol.energy + 2 * c * model.fields["R"](sol.samples), 0.0))
    tail = speed[j:]
    ds = sol.path.ds
    length_bound = float(ds * (tail.sum() - 0.5 * (tail[0] + tail[-1]))) if tail.size > 1 else 0.0
    return j, float(np.min(ric)), float(np.max(speed)), length_bound


def decay_run(model, c, x, targets, multistart=4, seed=0, resolution=1.0, ledgers=True, K=None):
    """One record per target; see the module docstring.

    ``resolution`` scales both the direct-solver grid and the IVP step count
    (used to check that K_ratio is resolution independent); an explicit
    ``K`` overrides the grid size.
    """
    if not model.soliton:
        raise UsageError(f"{model.name} is not a soliton with positive curvature")
    if not c > 0:
        raise UsageError("c must be positive")
    x = np.asarray(x, dtype=float)
    phi = PhiSpec.c_times_R(c)
    records = []
    for y in targets:
        y = np.asarray(y, dtype=float)
        d = riemann_distance(model, x, y)
        if not d > 2:
            raise UsageError(f"target at distance {d:.4g} <= 2; the trapezoid profile needs s_bar > 2")
        K_run = K
        if K_run is None and resolution != 1.0:
            from .geodesic import default_K

            K_run = int(default_K(d) * resolution)
        try:
            sol = solve_minimizer(model, phi, x, y, d, K=K_run, multistart=multistart, seed=seed,
                                  step=1e-2 / resolution)
        except NonConvergenceError as exc:
            log.warning("minimiser failed for y=%s: %s", y, exc)
            records.append(_failed_record(model, x, y, d, c, str(exc)))
            continue
        zeta = TestFunction.trapezoid(d)
        led = {}
        if sol.converged:
            led["rc_bound"] = inequality_369894(model, sol, zeta, c)
            if ledgers:
                led["gradR_bound"] = gradR_variant(model, sol, zeta, c)
                led["exeter"] = inequality_exeter(model, phi, sol, zeta)
                led["trace_index"] = trace_index_inequality(model, phi, sol, zeta)
        j, ric_z, max_speed, length_bound = _witness(model, sol, d, c)
        z = sol.samples[j]
        if np.allclose(z, y, rtol=0, atol=1e-14):
            dzy = 0.0
        else:
            dzy = riemann_distance(model, z, y)
        diag = {
            "solver": sol.solver,
            "direct_rel_gap": sol.info.get("direct_rel_gap"),
            "C_drift": sol.C_drift,
            "max_speed": max_speed,
            "speed_bound": math.sqrt(1 + 2 * c),
            "length_bound_z_y": length_bound,
            "exact_distance": exact_distance_from_origin(model, y) if not np.any(x) else None,
        }
        rc = led.get("rc_bound")
        records.append(DecayRecord(
            model=model.name, x=x.tolist(), y=y.tolist(), d=d, c=c, C=sol.C_estimate, J=sol.J_value,
            lhs=rc.lhs if rc else float("nan"), paper_bound=closed_bound(model.dim, c),
            z=z.tolist(), s_z=float(sol.path.s[j]), ric_at_z=ric_z, dist_z_y=dzy,
            half_dist_ok=bool(dzy <= d / 2 + 1e-6), K_ratio=ric_z * math.sqrt(d + 1),
            converged=bool(sol.converged), ledgers=led, diagnostics=diag,
        ))
    return records


def _failed_record(model, x, y, d, c, reason):
    nan = float("nan")
    return DecayRecord(model.name, x.tolist(), y.tolist(), d, c, nan, nan, nan, closed_bound(model.dim, c),
                       [], nan, nan, nan, False, nan, False, diagnostics={"error": reason})


# --- summaries ----------------------------------------------------------------------


@dataclass
class DecaySummary:
    model: str
    distances: list
    ric_at_z: list
    tail_max: list
    envelope: list
    K: float
    K_first: float
    bound_ok: bool
    envelope_decreasing: bool
    ric_strictly_decreasing: bool = False

    def to_dict(self):
        return asdict(self)


def _sorted_valid(records):
    valid = [r for r in records if r.valid]
    return sorted(valid, key=lambda r: (r.d, tuple(r.y)))


def liminf_summary(records) -> DecaySummary:
    """Tail maxima, envelope min_{d' >= d} |Rc|(z) and the fitted constants:
    K = max K_ratio over the batch, K_first = K_ratio at the smallest d.

    The tail minimum can only grow with d, so ``envelope_decreasing`` means
    it is flat (the farthest witness is the smallest); the witnesses
    themselves are tested for strict decrease separately.
    """
    rec = _sorted_valid(records)
    if len({round(r.d, 9) for r in rec}) < 3:
        raise InsufficientDataError("need valid records at 3 or more distinct distances")
    d = np.array([r.d for r in rec])
    ric = np.array([r.ric_at_z for r in rec])
    tail_max = [float(ric[i:].max()) for i in range(len(rec))]
    envelope = [float(ric[i:].min()) for i in range(len(rec))]
    K_first = rec[0].K_ratio
    bound_ok = bool(np.all(ric * np.sqrt(d + 1) <= K_first * (1 + 1e-9)))
    env = np.array(envelope)
    return DecaySummary(
        model=rec[0].model, distances=d.tolist(), ric_at_z=ric.tolist(), tail_max=tail_max,
        envelope=envelope, K=float(max(r.K_ratio for r in rec)), K_first=float(K_first),
        bound_ok=bound_ok, envelope_decreasing=bool(np.all(np.diff(env) <= 0)),
        ric_strictly_decreasing=bool(np.all(np.diff(ric) < 0)),
    )


@dataclass
class CWindowReport:
    checked: int
    violations: list

    @property
    def ok(self):
        return not self.violations


def c_window_check(records) -> CWindowReport:
    """C < 1 on every valid record; C >= 1/2 additionally when c <= 1/4."""
    violations = []
    checked = 0
    for r in records:
        if not r.valid:
            continue
        checked += 1
        if not r.C < 1 - 1e-8:
            violations.append(f"{r.model} c={r.c!r} d={r.d!r}: C = {r.C!r} is not < 1")
        if r.c <= 0.25 and not r.C >= 0.5 - 1e-6:
            violations.append(f"{r.model} c={r.c!r} d={r.d!r}: C = {r.C!r} < 1/2 with c <= 1/4")
    return CWindowReport(checked, violations)


# --- output -------------------------------------------------------------------------


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_decay_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DECAY_COLUMNS)
        for r in records:
            row = r.row()
            w.writerow([_fmt(row[k]) for k in DECAY_COLUMNS])


def write_decay_json(path, summaries, window: CWindowReport):
    payload = {
        "summaries": [s.to_dict() for s in summaries],
        "c_window": {"checked": window.checked, "violations": window.violations},
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
