"""Acceptance criteria 1-9, one printed PASS/FAIL line each.

Run with ``pytest tests/test_acceptance.py -s`` to watch the lines appear;
they are written to the terminal even under capture.  The full suite takes
a few minutes (the decay grid and the cigar rho grid dominate).
"""

import filecmp
import math
import os
import time

import numpy as np
import pytest

from solitonlab import decay as dec
from solitonlab.cli import main as cli_main
from solitonlab.geodesic import (
    DiscretePath,
    GeodesicSolution,
    PhiSpec,
    VariationField,
    conserved_quantity,
    first_variation,
    gradient_flow_check,
    integrate_phi_geodesic,
    solve_minimizer,
)
from solitonlab.geometry import check_soliton_identities
from solitonlab.models import ModelSpec, build_model
from solitonlab.rho import (
    analyze,
    cigar_grid,
    grad_identity_check,
    hj_residual,
    laplacian_comparison,
    phi_kernel_check,
    rho,
    rho_summary,
)
from solitonlab.variation import closed_bound, index_form, second_variation_fd, variation_fields

pytestmark = pytest.mark.slow

C_VALUES = (0.05, 0.25, 1.0)
DISTANCES = (5.0, 10.0, 20.0, 40.0)
NAMED_LEDGERS = ("exeter", "rc_bound", "gradR_bound")


def report(request, n, ok, detail, seconds, limit):
    """Print the verdict line and fail the test if the criterion is not met."""
    timely = seconds < limit
    verdict = "PASS" if ok and timely else "FAIL"
    line = f"criterion {n}: {verdict}  {detail}  [{seconds:.1f}s, limit {limit:g}s]"
    with request.config.pluginmanager.getplugin("capturemanager").global_and_fixture_disabled():
        print("\n" + line, flush=True)
    assert ok, line
    assert timely, line


# --- shared decay grid ---------------------------------------------------------------


@pytest.fixture(scope="module")
def decay_grid(cigar, cigar_r, bryant3):
    """Records for every (model, c) pair plus per-pair wall times."""
    plans = [(cigar, 0.0), (cigar_r, math.pi / 6), (bryant3, 0.0)]
    records, seconds = {}, {}
    for model, angle in plans:
        targets = dec.radial_targets(model, DISTANCES, angle)
        for c in C_VALUES:
            t0 = time.perf_counter()
            records[model.name, c] = dec.decay_run(model, c, np.zeros(model.dim), targets)
            seconds[model.name, c] = time.perf_counter() - t0
    return records, seconds


# --- 1 ------------------------------------------------------------------------------


def test_identities(request, cigar, cigar_r, bryant3):
    t0 = time.perf_counter()
    worst = {}
    ok = True
    for model, tol in ((cigar, 1e-7), (cigar_r, 1e-7), (bryant3, 1e-4)):
        grid = np.random.default_rng(0).uniform(-5, 5, size=(400, model.dim))
        rep = check_soliton_identities(model, grid)
        vals = [v for k, v in rep.maxima.items() if k != "scalar_consistency"]
        worst[model.name] = max(vals)
        ok &= worst[model.name] <= tol and not any(rep.flags.values())
    detail = "worst residual " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items())
    report(request, 1, ok, detail, time.perf_counter() - t0, 10)


# --- 2 ------------------------------------------------------------------------------


def test_conservation(request, cigar):
    t0 = time.perf_counter()
    phi = PhiSpec.c_times_R(0.25)
    x0, v0 = np.array([-1.0, 0.3]), np.array([4.0, 0.0])
    _, d1 = conserved_quantity(integrate_phi_geodesic(cigar, phi, x0, v0, 20.0, step=1e-3))
    _, d2 = conserved_quantity(integrate_phi_geodesic(cigar, phi, x0, v0, 20.0, step=5e-4))
    ratio = d1 / d2
    report(request, 2, d1 <= 1e-8 and ratio >= 12, f"drift {d1:.2e}, halving ratio {ratio:.1f}",
           time.perf_counter() - t0, 5)


# --- 3 ------------------------------------------------------------------------------


def _flat_line(model):
    K = 4000
    X = np.stack([np.linspace(0, 1, K + 1), np.zeros(K + 1)], axis=1)
    return GeodesicSolution(DiscretePath(X, 1.0), np.tile([1.0, 0.0], (K + 1, 1)), 1.0, 1.0, 0.0, "ivp", True)


def _bump(sol):
    return VariationField.from_profile(sol.path.s, sol.s_bar, lambda t: np.sin(np.pi * t), [0.0, 1.0])


def test_variation_oracles(request, cigar, flat_quad):
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    minimizers = []
    for i in range(10):
        c = C_VALUES[i % 3]
        phi = PhiSpec.c_times_R(c)
        x, y = rng.uniform(-2, 2, 2), rng.uniform(-2, 2, 2)
        sol = solve_minimizer(cigar, phi, x, y, float(rng.uniform(1, 4)), seed=i)
        assert sol.converged
        minimizers.append((phi, sol))
    fv = max(abs(first_variation(cigar, phi, sol.path, U, velocities=sol.velocities))
             for i, (phi, sol) in enumerate(minimizers)
             for U in variation_fields(sol, 10, seed=i, model=cigar))

    cases = []  # (index form, finite-difference second variation, closed form or None)
    zero_flat = build_model(ModelSpec("euclidean", n=2))
    line = _flat_line(zero_flat)
    cases.append((index_form(zero_flat, PhiSpec.zero(), line, _bump(line)),
                  second_variation_fd(zero_flat, PhiSpec.zero(), line, _bump(line)), math.pi**2 / 2))
    cosh = integrate_phi_geodesic(flat_quad, PhiSpec.custom("phi"), [1.0, 0.0], [0.0, 0.0], 1.0, step=2.5e-4)
    cases.append((index_form(flat_quad, PhiSpec.custom("phi"), cosh, _bump(cosh)),
                  second_variation_fd(flat_quad, PhiSpec.custom("phi"), cosh, _bump(cosh)), math.pi**2 / 2 + 0.5))
    for i, (phi, sol) in enumerate(minimizers[:6]):
        for U in variation_fields(sol, 3, seed=100 + i, model=cigar):
            cases.append((index_form(cigar, phi, sol, U), second_variation_fd(cigar, phi, sol, U), None))
    assert len(cases) == 20
    ok_cases = 0
    for q, fd, exact in cases:
        good = abs(q - fd) <= max(1e-4, 1e-2 * abs(fd))
        if exact is not None:
            good &= abs(q - exact) <= max(1e-4, 1e-2 * exact)
        ok_cases += good
    ok = fv <= 1e-6 and ok_cases == len(cases)
    report(request, 3, ok, f"max first variation {fv:.1e}, index form {ok_cases}/{len(cases)} agree",
           time.perf_counter() - t0, 60)


# --- 4 ------------------------------------------------------------------------------


def test_ledgers(request, decay_grid):
    records, seconds = decay_grid
    checked, bad, worst = 0, [], math.inf
    for (name, c), recs in records.items():
        for r in recs:
            if not r.converged:
                bad.append(f"{name} c={c} d={r.d:g} not converged")
                continue
            for key in NAMED_LEDGERS:
                led = r.ledgers[key]
                checked += 1
                worst = min(worst, led.slack)
                if not led.slack > 0:
                    bad.append(f"{name} c={c} d={r.d:g} {key} slack {led.slack:.3g}")
            n = len(r.y)
            if not r.ledgers["rc_bound"].rhs < closed_bound(n, c):
                bad.append(f"{name} c={c} d={r.d:g} rhs above closed bound")
    detail = f"{checked} ledgers over {len(records)} runs, worst slack {worst:.3g}, {len(bad)} violations"
    if bad:
        detail += ": " + "; ".join(bad[:5])
    report(request, 4, not bad, detail, sum(seconds.values()), 600)


# --- 5 ------------------------------------------------------------------------------


def test_c_window(request, decay_grid):
    records, _ = decay_grid
    t0 = time.perf_counter()
    window = dec.c_window_check([r for recs in records.values() for r in recs])
    Cs = [r.C for recs in records.values() for r in recs if r.converged]
    detail = f"{window.checked} minimizers, C in [{min(Cs):.4f}, {max(Cs):.4f}], {len(window.violations)} violations"
    report(request, 5, window.ok and window.checked == 36, detail, time.perf_counter() - t0, 60)


# --- 6 ------------------------------------------------------------------------------


def test_decay(request, decay_grid):
    records, seconds = decay_grid
    recs = records["cigar", 0.25]
    summary = dec.liminf_summary(recs)
    closed = max(abs(r.ric_at_z - (1 / math.sqrt(2)) / (1 + float(np.dot(r.z, r.z)))) for r in recs)
    ok = (all(r.converged and r.half_dist_ok for r in recs) and summary.bound_ok and closed <= 1e-5
          and summary.envelope_decreasing and summary.envelope[-1] < 0.01 and summary.ric_strictly_decreasing)
    detail = (f"K={summary.K_first:.4f}, closed-form error {closed:.1e}, "
              f"|Rc|(z) {' > '.join(f'{e:.2e}' for e in summary.ric_at_z)}, envelope at d=40 {summary.envelope[-1]:.1e}")
    report(request, 6, ok, detail, seconds["cigar", 0.25], 300)


# --- 7 ------------------------------------------------------------------------------


def test_rho(request, flat, cigar):
    t0 = time.perf_counter()
    flat_worst = 0.0
    for phi in (PhiSpec.zero(), PhiSpec.custom("phi")):
        for y in ([1.0, 2.0], [0.5, -1.0], [2.0, 0.3]):
            for sb in (1.0, 2.0, 4.0):
                s = rho(flat, phi, np.zeros(2), np.array(y), sb)
                led = laplacian_comparison(flat, phi, s)
                flat_worst = max(flat_worst, grad_identity_check(flat, phi, s), hj_residual(flat, phi, s),
                                 abs(led.lhs - led.rhs), abs(phi_kernel_check(flat, phi, s).residual))
    quarter = PhiSpec.c_times_R(0.25)
    rows = [analyze(cigar, quarter, np.zeros(2), y, sb) for y, sb in cigar_grid()]
    summ = rho_summary(rows)
    ok = (flat_worst <= 1e-8 and len(rows) == 147 and summ["smooth"] > 0 and summ["max_grad_res"] <= 1e-3
          and summ["min_hj_order"] >= 1 and summ["lap_violations"] == 0 and summ["kernel_violations"] == 0)
    detail = (f"flat worst {flat_worst:.1e}; cigar {summ['smooth']}/{summ['samples']} smooth "
              f"(non-smooth fraction {summ['non_smooth_fraction']:.3f}), grad {summ['max_grad_res']:.1e}, "
              f"HJ order >= {summ['min_hj_order']:.2f}, Laplacian/kernel violations "
              f"{summ['lap_violations']}/{summ['kernel_violations']}")
    report(request, 7, ok, detail, time.perf_counter() - t0, 1200)


# --- 8 ------------------------------------------------------------------------------


def test_gradient_flow(request, cigar, bryant3):
    t0 = time.perf_counter()
    a = gradient_flow_check(cigar, np.array([3.0, 1.0]), 5.0)
    b = gradient_flow_check(bryant3, np.array([3.0, 1.0, 0.0]), 5.0)
    ok = a.max_residual <= 1e-6 and b.max_residual <= 1e-4 and not (a.partial or b.partial)
    report(request, 8, ok, f"cigar {a.max_residual:.1e}, bryant {b.max_residual:.1e}", time.perf_counter() - t0, 5)


# --- 9 ------------------------------------------------------------------------------


def test_determinism(request, tmp_path):
    import json

    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({
        "model": "cigar",
        "c_values": [0.25],
        "experiments": ["identities", "geodesic", "ledgers", "decay", "rho"],
        "rho": {"side": 2, "s_bars": [1.0]},
        "seed": 7,
    }))
    t0 = time.perf_counter()
    for run in ("a", "b"):
        assert cli_main(["--config", str(cfg), "--out", str(tmp_path / run)]) == 0
    csvs = sorted(f for f in os.listdir(tmp_path / "a") if f.endswith(".csv"))
    _, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", csvs, shallow=False)
    ok = len(csvs) >= 5 and not mismatch and not errors
    report(request, 9, ok, f"{len(csvs)} CSVs compared, {len(mismatch) + len(errors)} differ",
           time.perf_counter() - t0, 600)
