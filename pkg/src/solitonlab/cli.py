"""Batch runner: ``python3 -m solitonlab --config run.json [--only X] [--out DIR] [--seed N]``.

Experiments run in the order identities, geodesic, ledgers, decay, rho.
Each writes its CSVs into the output directory; ``suite_report.json``
collects pass/fail counts, worst slacks, the fitted decay constant and
timings.  The exit status is 1 iff some checked invariant failed, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import decay as dec
from . import rho as rh
from .config import EXPERIMENTS, RunConfig, load_config
from .errors import DataError, SolitonLabError
from .geodesic import (
    PhiSpec,
    conserved_quantity,
    gradient_flow_check,
    integrate_phi_geodesic,
    riemann_distance,
    shoot_bvp,
    solve_minimizer,
)
from .geometry import check_soliton_identities
from .models import build_model
from .variation import _fmt, closed_bound, index_form, second_variation_fd, variation_fields, write_ledger_csv

log = logging.getLogger("solitonlab")

IDENTITY_TOL_ANALYTIC = 1e-7
IDENTITY_TOL_NUMERIC = 1e-4
DRIFT_TOL = 1e-8
HALVING_RATIO = 12.0
NOISE_FLOOR = 1e-10
CIGAR_RIC_TOL = 1e-5
INDEX_REL_TOL = 1e-2
INDEX_ABS_TOL = 1e-4


@dataclass
class ExperimentResult:
    passed: int = 0
    failed: int = 0
    failures: list = field(default_factory=list)
    worst_slack: float = math.inf
    seconds: float = 0.0
    extra: dict = field(default_factory=dict)

    def check(self, ok, label):
        if ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failures.append(label)
        return ok

    def slack(self, value):
        if math.isfinite(value):
            self.worst_slack = min(self.worst_slack, float(value))


@dataclass
class SuiteReport:
    model: str
    seed: int
    experiments: dict = field(default_factory=dict)
    K: float = math.nan
    non_smooth_fraction: float = math.nan
    written: list = field(default_factory=list)

    @property
    def ok(self):
        return all(r.failed == 0 for r in self.experiments.values())

    def to_dict(self):
        exps = {}
        for name, r in self.experiments.items():
            d = asdict(r)
            d["worst_slack"] = _json_float(r.worst_slack)
            exps[name] = d
        return {
            "model": self.model,
            "seed": self.seed,
            "ok": self.ok,
            "K": _json_float(self.K),
            "non_smooth_fraction": _json_float(self.non_smooth_fraction),
            "experiments": exps,
            "written": sorted(self.written),
        }


def _json_float(v):
    return float(v) if math.isfinite(v) else None


def _write_rows(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


# --- experiments ------------------------------------------------------------------


class Runner:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.model = build_model(cfg.model)
        self.n = self.model.dim
        self.kind = cfg.model.kind
        self.report = SuiteReport(self.model.name, cfg.seed)
        self._records = {}  # c -> decay records shared by ledgers and decay

    def _path(self, name):
        p = os.path.join(self.cfg.out, name)
        self.report.written.append(name)
        return p

    def _phis(self):
        if self.model.soliton:
            return [(c, PhiSpec.c_times_R(c)) for c in self.cfg.c_values]
        return [(None, PhiSpec.custom("phi"))]

    def _origin(self):
        return np.zeros(self.n)

    def run(self) -> SuiteReport:
        os.makedirs(self.cfg.out, exist_ok=True)
        for name in EXPERIMENTS:
            if name not in self.cfg.experiments:
                continue
            res = ExperimentResult()
            t0 = time.perf_counter()
            try:
                getattr(self, f"exp_{name}")(res)
            except SolitonLabError as exc:
                res.check(False, f"{type(exc).__name__}: {exc}")
            res.seconds = time.perf_counter() - t0
            self.report.experiments[name] = res
            log.info("%s: %d passed, %d failed (%.1fs)", name, res.passed, res.failed, res.seconds)
        with open(self._path("suite_report.json"), "w") as fh:
            json.dump(self.report.to_dict(), fh, indent=2, sort_keys=True)
        return self.report

    # identities ------------------------------------------------------------

    def exp_identities(self, res):
        if not self.model.soliton:
            res.extra["skipped"] = "not a soliton model"
            return
        rng = np.random.default_rng(self.cfg.seed)
        grid = rng.uniform(-5.0, 5.0, size=(self.cfg.resolution.grid_count, self.n))
        exact = self.kind in ("cigar", "cigar_product") and self.model.analytic
        tol = IDENTITY_TOL_ANALYTIC if exact else IDENTITY_TOL_NUMERIC
        rep = check_soliton_identities(self.model, grid)
        rows = []
        for key, val in rep.maxima.items():
            ok = key == "scalar_consistency" or val <= tol
            if key != "scalar_consistency":
                res.check(ok, f"identity {key}: {val!r} > {tol!r}")
                res.slack(tol - val)
            rows.append((self.model.name, key, val, tol, ok))
        for key, flag in rep.flags.items():
            res.check(not flag, f"flag {key} raised")
        _write_rows(self._path("identities.csv"), ("model", "identity", "max_residual", "tol", "ok"), rows)

    # geodesic --------------------------------------------------------------

    def _defaults(self):
        g = self.cfg.geodesic
        x0 = np.zeros(self.n)
        x0[:2] = (-1.0, 0.3)
        v0 = np.zeros(self.n)
        if self.kind == "bryant":
            v0[0] = 1.0  # stays inside the tabulated profile over s_bar = 20
        elif self.kind == "euclidean":
            v0[:2] = (1.0, 0.5)
        else:
            v0[0] = 4.0
        x0 = np.asarray(g.x0, dtype=float) if g.x0 is not None else x0
        v0 = np.asarray(g.v0, dtype=float) if g.v0 is not None else v0
        return x0, v0

    def exp_geodesic(self, res):
        g = self.cfg.geodesic
        step = self.cfg.resolution.step
        x0, v0 = self._defaults()
        rows = []

        def add(check, c, value, tol, ok):
            rows.append((self.model.name, check, "" if c is None else c, value, tol, ok))
            res.check(ok, f"{check} c={c}: {value!r} vs {tol!r}")

        for c, phi in self._phis():
            a = integrate_phi_geodesic(self.model, phi, x0, v0, g.s_bar, step=step)
            b = integrate_phi_geodesic(self.model, phi, x0, v0, g.s_bar, step=step / 2)
            _, d1 = conserved_quantity(a)
            _, d2 = conserved_quantity(b)
            add("ivp_exited", c, float(not (a.converged and b.converged)), 0.0, a.converged and b.converged)
            add("C_drift", c, d1, DRIFT_TOL, d1 <= DRIFT_TOL)
            res.slack(DRIFT_TOL - d1)
            ratio = d1 / d2 if d2 > 0 else math.inf
            # near the round-off / interpolation floor the ratio carries no information
            floor = d1 <= NOISE_FLOOR * max(1.0, abs(a.C_estimate))
            add("halving_ratio", c, ratio, HALVING_RATIO, bool(ratio >= HALVING_RATIO or floor))
            if self.kind == "euclidean" and self.cfg.model.phi[0] == "const":
                self._straight_line(add, phi, x0, v0, g.s_bar)
        if self.model.soliton:
            tol = 1e-6 if self.kind in ("cigar", "cigar_product") else 1e-4
            start = np.zeros(self.n)
            start[:2] = (3.0, 1.0)
            gf = gradient_flow_check(self.model, start, 5.0)
            add("gradient_flow", None, gf.max_residual, tol, gf.max_residual <= tol and not gf.partial)
            self._distance(add)
        _write_rows(self._path("geodesic.csv"), ("model", "check", "c", "value", "tol", "ok"), rows)

    def _straight_line(self, add, phi, x0, v0, s_bar):
        y = x0 + s_bar * v0
        sol = shoot_bvp(self.model, phi, x0, y, s_bar)
        line = x0 + np.outer(sol.path.s / s_bar, y - x0)
        dev = float(np.max(np.abs(sol.samples - line)))
        J_exact = float((y - x0) @ (y - x0)) / s_bar + 2 * self.cfg.model.phi[1] * s_bar
        add("straight_line_dev", None, dev, 1e-8, sol.converged and dev <= 1e-8)
        add("straight_line_J", None, abs(sol.J_value - J_exact), 1e-8 * J_exact,
            abs(sol.J_value - J_exact) <= 1e-8 * J_exact)

    def _distance(self, add):
        y = np.zeros(self.n)
        y[:2] = (2.0, 1.0)
        exact = dec.exact_distance_from_origin(self.model, y)
        d = riemann_distance(self.model, self._origin(), y)
        tol = 1e-8 if self.kind in ("cigar", "cigar_product") else 1e-6
        add("distance_from_origin", None, abs(d - exact), tol, abs(d - exact) <= tol)

    # ledgers ---------------------------------------------------------------

    def _decay_records(self, c, ledgers):
        if c not in self._records:
            t = self.cfg.targets
            targets = dec.radial_targets(self.model, t.distances, t.angle)
            self._records[c] = dec.decay_run(
                self.model, c, self._origin(), targets, multistart=self.cfg.geodesic.multistart,
                seed=self.cfg.seed, ledgers=ledgers, K=self.cfg.resolution.K,
            )
        return self._records[c]

    def exp_ledgers(self, res):
        by_name = {}
        for c in self.cfg.c_values:
            for r in self._decay_records(c, ledgers=True):
                if not res.check(r.converged, f"minimiser c={c} d={r.d!r} did not converge"):
                    continue
                for name, led in r.ledgers.items():
                    by_name.setdefault(name, []).append(led)
                    res.check(led.holds, f"{name} c={c} d={r.d!r}: slack {led.slack!r}")
                    res.slack(led.slack)
                rc = r.ledgers["rc_bound"]
                bound = closed_bound(self.n, c)
                res.check(rc.rhs < bound, f"rc_bound rhs {rc.rhs!r} >= closed bound {bound!r}")
        for name in sorted(by_name):
            write_ledger_csv(self._path(f"ledgers_{name}.csv"), by_name[name])
        self._index_form_checks(res)

    def _index_form_checks(self, res):
        count = self.cfg.geodesic.variation_fields
        if count == 0:
            return
        rows = []
        y = dec.radial_targets(self.model, [3.0])[0]
        for c in self.cfg.c_values:
            phi = PhiSpec.c_times_R(c)
            sol = solve_minimizer(self.model, phi, self._origin(), y, 3.0, seed=self.cfg.seed)
            for i, U in enumerate(variation_fields(sol, count, seed=self.cfg.seed, model=self.model)):
                q = index_form(self.model, phi, sol, U)
                fd = second_variation_fd(self.model, phi, sol, U)
                tol = max(INDEX_ABS_TOL, INDEX_REL_TOL * abs(fd))
                ok = abs(q - fd) <= tol
                res.check(ok, f"index form c={c} field {i}: {q!r} vs {fd!r}")
                rows.append((self.model.name, c, i, q, fd, abs(q - fd), tol, ok))
        _write_rows(self._path("index_form.csv"),
                    ("model", "c", "field", "index_form", "second_variation_fd", "abs_err", "tol", "ok"), rows)

    # decay -----------------------------------------------------------------

    def exp_decay(self, res):
        records, summaries = [], []
        for c in self.cfg.c_values:
            recs = self._decay_records(c, ledgers=False)
            records.extend(recs)
            for r in recs:
                if not res.check(r.converged, f"decay c={c} d={r.d!r}: minimiser did not converge"):
                    continue
                res.check(r.half_dist_ok, f"decay c={c} d={r.d!r}: d(z,y) = {r.dist_z_y!r} > d/2")
                if self.kind == "cigar":
                    rz2 = float(np.sum(np.square(r.z)))
                    exact = (1 / math.sqrt(2)) / (1 + rz2)
                    res.check(abs(r.ric_at_z - exact) <= CIGAR_RIC_TOL,
                              f"decay c={c} d={r.d!r}: |Rc|(z) = {r.ric_at_z!r} vs {exact!r}")
            s = dec.liminf_summary(recs)
            summaries.append(s)
            res.check(s.bound_ok, f"decay c={c}: K_ratio exceeds the value fitted at the first distance")
            res.check(s.envelope_decreasing, f"decay c={c}: envelope not decreasing")
            self.report.K = max(s.K, self.report.K) if math.isfinite(self.report.K) else s.K
        window = dec.c_window_check(records)
        for v in window.violations:
            res.check(False, v)
        res.passed += window.checked - len(window.violations)
        dec.write_decay_csv(self._path("decay.csv"), records)
        dec.write_decay_json(self._path("decay_summary.json"), summaries, window)

    # rho -------------------------------------------------------------------

    def exp_rho(self, res):
        q = self.cfg.rho
        if self.model.soliton:
            phi = PhiSpec.c_times_R(q.c if q.c is not None else self.cfg.c_values[0])
        else:
            phi = PhiSpec.custom("phi")
        ax = np.linspace(q.lo, q.hi, q.side)
        rows = []
        for sb in q.s_bars:
            for a in ax:
                for b in ax:
                    y = np.zeros(self.n)
                    y[:2] = (a, b)
                    rows.append(rh.analyze(self.model, phi, self._origin(), y, float(sb),
                                           h=self.cfg.resolution.stencil_h, seed=self.cfg.seed))
        summary = rh.rho_summary(rows)
        self.report.non_smooth_fraction = summary["non_smooth_fraction"]
        res.extra.update({k: _json_float(float(v)) for k, v in summary.items()})
        for r in rows:
            if not r.smooth:
                continue
            tag = f"rho y={r.y} s_bar={r.s_bar!r}"
            res.check(r.grad_res <= 1e-3, f"{tag}: grad residual {r.grad_res!r}")
            res.check(r.hj_order >= 1, f"{tag}: HJ order {r.hj_order!r}")
            res.check(r.lap_ok, f"{tag}: Laplacian comparison fails")
            res.check(r.kernel_ok, f"{tag}: kernel inequality fails")
            res.slack(r.lap_rhs - r.lap_lhs)
        rh.write_rho_csv(self._path("rho.csv"), rows, self.n)
        rh.write_hj_csv(self._path("rho_hj.csv"), rows, self.n)


def run(cfg: RunConfig) -> SuiteReport:
    return Runner(cfg).run()


# --- plot series ------------------------------------------------------------------


def _read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def emit_plot_series(out_dir):
    """Two-column text series for external plotting; returns the paths."""
    need = {"decay.csv": os.path.join(out_dir, "decay.csv"), "rho_hj.csv": os.path.join(out_dir, "rho_hj.csv")}
    present = {k: p for k, p in need.items() if os.path.exists(p)}
    if not present:
        raise DataError(f"no experiment outputs in {out_dir}: missing {', '.join(sorted(need))}")
    written = []
    if "decay.csv" in present:
        rows = [r for r in _read_csv(present["decay.csv"]) if r["converged"] == "true"]
        rows.sort(key=lambda r: (float(r["d"]), float(r["c"])))
        for name, col in (("decay_ric.dat", "ric_at_z"), ("decay_kratio.dat", "K_ratio")):
            p = os.path.join(out_dir, name)
            with open(p, "w") as fh:
                for r in rows:
                    fh.write(f"{r['d']} {r[col]}\n")
            written.append(p)
    if "rho_hj.csv" in present:
        p = os.path.join(out_dir, "hj_convergence.dat")
        with open(p, "w") as fh:
            for r in _read_csv(present["rho_hj.csv"]):
                fh.write(f"{r['h']} {r['hj_res']}\n{r['h_half']} {r['hj_res_half']}\n")
        written.append(p)
    return written


# --- entry point ------------------------------------------------------------------


def main(argv=None):
    ap = argparse.ArgumentParser(prog="solitonlab", description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True, metavar="PATH")
    ap.add_argument("--only", choices=EXPERIMENTS, metavar="EXPERIMENT")
    ap.add_argument("--out", metavar="DIR")
    ap.add_argument("--seed", type=int, metavar="N")
    ap.add_argument("--plots", action="store_true", help="also write .dat plot series")
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        cfg = load_config(args.config).with_overrides(args.only, args.out, args.seed)
    except SolitonLabError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    try:
        report = run(cfg)
    except SolitonLabError as exc:
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    if args.plots:
        try:
            emit_plot_series(cfg.out)
        except DataError as exc:
            print(f"plot series: {exc}", file=sys.stderr)
    for name, r in report.experiments.items():
        print(f"{name:<11} passed={r.passed} failed={r.failed} time={r.seconds:.1f}s")
        for f in r.failures[:20]:
            print(f"  FAIL {f}")
    return 0 if report.ok else 1
