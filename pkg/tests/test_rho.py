import math

import numpy as np
import pytest

from solitonlab.errors import UsageError
from solitonlab.geodesic import PhiSpec, riemann_distance, shoot_bvp
from solitonlab.rho import (
    analyze,
    cigar_grid,
    fd_gradient,
    fd_sbar_derivative,
    grad_identity_check,
    hj_order,
    hj_residual,
    laplacian_comparison,
    ledger_holds,
    phi_kernel_check,
    rho,
    rho_columns,
    rho_summary,
    write_hj_csv,
    write_rho_csv,
)

ZERO = PhiSpec.zero()
PHI = PhiSpec.custom("phi")
QUARTER = PhiSpec.c_times_R(0.25)
X0 = np.zeros(2)


@pytest.fixture(scope="module")
def flat_zero_sample(flat):
    return rho(flat, ZERO, X0, np.array([1.0, 2.0]), 2.0)


@pytest.fixture(scope="module")
def flat_const_sample(flat):
    return rho(flat, PHI, X0, np.array([1.0, 2.0]), 2.0)


@pytest.fixture(scope="module")
def cigar_sample(cigar):
    return rho(cigar, QUARTER, X0, np.array([1.0, 0.0]), 2.0)


def test_flat_values(flat_zero_sample, flat_const_sample):
    assert flat_zero_sample.rho == pytest.approx(5 / 2, abs=1e-10)
    assert flat_const_sample.rho == pytest.approx(5 / 2 + 2 * 0.25 * 2, abs=1e-10)
    assert flat_zero_sample.smooth_flag and flat_const_sample.smooth_flag


def test_flat_gradient_identity(flat, flat_zero_sample):
    assert grad_identity_check(flat, ZERO, flat_zero_sample) <= 1e-8


@pytest.mark.parametrize("which", ["flat_zero_sample", "flat_const_sample"])
def test_flat_hj_residual(flat, which, request):
    sample = request.getfixturevalue(which)
    phi = ZERO if which == "flat_zero_sample" else PHI
    assert hj_residual(flat, phi, sample) <= 1e-8


@pytest.mark.parametrize("which", ["flat_zero_sample", "flat_const_sample"])
def test_flat_laplacian_equality(flat, which, request):
    sample = request.getfixturevalue(which)
    phi = ZERO if which == "flat_zero_sample" else PHI
    led = laplacian_comparison(flat, phi, sample)
    assert led.lhs == pytest.approx(2 / 2.0, abs=1e-6)
    assert led.rhs == pytest.approx(2 / 2.0, abs=1e-12)
    assert abs(led.slack) <= 1e-6 and ledger_holds(led)


def test_flat_kernel_equality(flat, flat_zero_sample, flat_const_sample):
    ks = phi_kernel_check(flat, ZERO, flat_zero_sample)
    assert ks.phi_kernel == pytest.approx(2.0 ** -1 * math.exp(-flat_zero_sample.rho / 4), rel=1e-15)
    assert abs(ks.lhs) <= 1e-8 and ks.rhs == 0
    ks = phi_kernel_check(flat, PHI, flat_const_sample)
    assert abs(ks.residual) <= 1e-6


def test_hyperbolic_gradient_identity(flat_quad):
    sample = rho(flat_quad, PHI, np.array([1.0, 0.0]), np.array([math.cosh(1.0), 0.0]), 1.0)
    assert sample.smooth_flag
    assert grad_identity_check(flat_quad, PHI, sample) <= 1e-5


def test_cigar_value_matches_shooting(cigar, cigar_sample):
    shot = shoot_bvp(cigar, QUARTER, X0, np.array([1.0, 0.0]), 2.0, guess=[0.5, 0.0], step=1e-3)
    assert cigar_sample.rho == pytest.approx(shot.J_value, rel=1e-5)
    assert cigar_sample.rho == pytest.approx(cigar_sample.minimizer.J_value, abs=1e-8)


def test_cigar_sample_checks(cigar, cigar_sample):
    assert cigar_sample.smooth_flag
    assert grad_identity_check(cigar, QUARTER, cigar_sample) <= 1e-3
    r1, r2, order = hj_order(cigar, QUARTER, cigar_sample)
    assert order >= 1 and r2 < r1
    assert ledger_holds(laplacian_comparison(cigar, QUARTER, cigar_sample))
    assert phi_kernel_check(cigar, QUARTER, cigar_sample).holds


def test_hj_cross_wiring(cigar, cigar_sample):
    g = fd_gradient(cigar_sample, cigar_sample.stencil_h / 2)
    ginv = np.linalg.inv(cigar.metric(cigar_sample.y))
    via_hj = -0.25 * g @ ginv @ g + 2 * float(QUARTER.field(cigar)(cigar_sample.y))
    direct = fd_sbar_derivative(cigar_sample)
    assert abs(direct - via_hj) == pytest.approx(hj_residual(cigar, QUARTER, cigar_sample, cigar_sample.stencil_h / 2),
                                                 abs=1e-12)


def test_reversal_symmetry_and_overshoot(cigar):
    y = np.array([1.0, 0.5])
    a = rho(cigar, QUARTER, X0, y, 2.0, diagnose=False)
    b = rho(cigar, QUARTER, y, X0, 2.0, diagnose=False)
    assert a.rho == pytest.approx(b.rho, abs=1e-6)
    d = riemann_distance(cigar, X0, y)
    assert a.rho >= d * d / 2.0 - 1e-6


def test_checks_need_smooth_flag(cigar):
    s = rho(cigar, QUARTER, X0, np.array([1.0, 0.0]), 2.0, diagnose=False)
    with pytest.raises(UsageError):
        grad_identity_check(cigar, QUARTER, s)


def test_rho_needs_positive_horizon(cigar):
    with pytest.raises(UsageError):
        rho(cigar, QUARTER, X0, np.array([1.0, 0.0]), 0.0)


def test_batch_outputs(cigar, tmp_path):
    rows = [analyze(cigar, QUARTER, X0, y, sb) for y, sb in cigar_grid(side=2, lo=0.5, hi=1.5, s_bars=(2.0,))]
    summ = rho_summary(rows)
    assert summ["samples"] == 4 and summ["non_smooth_fraction"] == 0.0
    assert summ["lap_violations"] == 0 and summ["kernel_violations"] == 0
    write_rho_csv(tmp_path / "rho.csv", rows, 2)
    header = (tmp_path / "rho.csv").read_text().splitlines()[0]
    assert header == ",".join(rho_columns(2)) == "y1,y2,s_bar,rho,smooth,grad_res,hj_res,lap_lhs,lap_rhs,kernel_res"
    write_hj_csv(tmp_path / "hj.csv", rows, 2)
    assert len((tmp_path / "hj.csv").read_text().splitlines()) == 5


def test_standard_grid_shape():
    grid = cigar_grid()
    assert len(grid) == 147
    assert {sb for _, sb in grid} == {1.0, 2.0, 4.0}
