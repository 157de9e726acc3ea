import dataclasses
import json
import math

import numpy as np
import pytest

from solitonlab.decay import (
    DECAY_COLUMNS,
    c_window_check,
    decay_run,
    exact_distance_from_origin,
    liminf_summary,
    radial_targets,
    write_decay_csv,
    write_decay_json,
)
from solitonlab.errors import InsufficientDataError, UsageError
from solitonlab.variation import closed_bound

DISTANCES = [5.0, 10.0, 20.0, 40.0]


@pytest.fixture(scope="module")
def cigar_records(cigar):
    return decay_run(cigar, 0.25, np.zeros(2), radial_targets(cigar, DISTANCES))


def _ric_closed_form(z):
    return (1 / math.sqrt(2)) / (1 + float(np.dot(z, z)))


def test_cigar_record_at_distance_ten(cigar_records):
    r = next(r for r in cigar_records if abs(r.d - 10) < 1e-6)
    assert r.converged
    assert r.lhs < 12.899 and r.paper_bound == pytest.approx(closed_bound(2, 0.25))
    assert r.half_dist_ok and r.dist_z_y <= r.d / 2 + 1e-6
    midpoint = math.sinh(r.d / 4)
    assert r.ric_at_z <= _ric_closed_form([midpoint, 0.0]) + 1e-6


def test_cigar_witnesses_match_closed_form(cigar, cigar_records):
    for r in cigar_records:
        assert r.ric_at_z == pytest.approx(_ric_closed_form(r.z), abs=1e-5)
        assert r.d == pytest.approx(exact_distance_from_origin(cigar, r.y), abs=1e-6)


def test_cigar_witnesses_strictly_decrease(cigar_records):
    ric = [r.ric_at_z for r in sorted(cigar_records, key=lambda r: r.d)]
    assert all(b < a for a, b in zip(ric, ric[1:]))


def test_summary_and_fitted_constant(cigar_records):
    s = liminf_summary(cigar_records)
    assert s.bound_ok and s.envelope_decreasing and s.ric_strictly_decreasing
    for d, tail in zip(s.distances, s.tail_max):
        assert tail <= s.K_first / math.sqrt(d + 1) * (1 + 1e-9)
    assert s.envelope[-1] < 0.01


def test_c_window_on_cigar(cigar_records):
    rep = c_window_check(cigar_records)
    assert rep.ok and rep.checked == 4
    assert all(0.5 <= r.C < 1 for r in cigar_records)


def test_c_window_reports_injected_violation(cigar_records):
    bad = dataclasses.replace(cigar_records[0], C=1.2)
    rep = c_window_check([bad])
    assert not rep.ok
    assert "1.2" in rep.violations[0]


def test_large_c_skips_lower_bound(cigar):
    recs = decay_run(cigar, 1.0, np.zeros(2), radial_targets(cigar, [5.0, 10.0]), ledgers=False)
    assert c_window_check(recs).ok
    assert all(r.C < 1 for r in recs)


def test_flat_model_rejected(flat):
    with pytest.raises(UsageError):
        decay_run(flat, 0.25, np.zeros(2), [np.array([10.0, 0.0])])


def test_short_distance_rejected(cigar):
    with pytest.raises(UsageError):
        decay_run(cigar, 0.25, np.zeros(2), [np.array([0.5, 0.0])])


def test_summary_needs_three_distances(cigar_records):
    same = [r for r in cigar_records if abs(r.d - 5) < 1e-6] * 3
    with pytest.raises(InsufficientDataError):
        liminf_summary(same)


def test_k_ratio_stable_under_doubling(cigar):
    t = radial_targets(cigar, [5.0, 10.0])
    a = decay_run(cigar, 0.25, np.zeros(2), t, ledgers=False)
    b = decay_run(cigar, 0.25, np.zeros(2), t, ledgers=False, resolution=2.0)
    for ra, rb in zip(a, b):
        assert rb.K_ratio == pytest.approx(ra.K_ratio, rel=0.02)


def test_bryant_envelope(bryant3):
    recs = decay_run(bryant3, 0.25, np.zeros(3), radial_targets(bryant3, [5.0, 10.0, 20.0]), ledgers=False)
    s = liminf_summary(recs)
    assert s.envelope_decreasing and s.ric_strictly_decreasing
    assert all(r.half_dist_ok for r in recs)


def test_off_radial_targets_on_product(cigar, cigar_r):
    y = radial_targets(cigar_r, [6.0], angle=math.pi / 6)[0]
    assert exact_distance_from_origin(cigar_r, y) == pytest.approx(6.0, rel=1e-12)
    with pytest.raises(UsageError):
        radial_targets(cigar, [6.0], angle=0.3)


def test_outputs(cigar_records, tmp_path):
    write_decay_csv(tmp_path / "decay.csv", cigar_records)
    lines = (tmp_path / "decay.csv").read_text().splitlines()
    assert lines[0] == ",".join(DECAY_COLUMNS)
    assert len(lines) == 5
    s = liminf_summary(cigar_records)
    write_decay_json(tmp_path / "s.json", [s], c_window_check(cigar_records))
    payload = json.loads((tmp_path / "s.json").read_text())
    assert payload["summaries"][0]["K"] == pytest.approx(s.K)
    assert payload["c_window"]["violations"] == []
