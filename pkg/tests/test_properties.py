"""Property-based checks of the invariants the modules declare."""

import dataclasses
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from solitonlab.config import config_from_dict
from solitonlab.decay import DecayRecord, c_window_check
from solitonlab.errors import ConfigError
from solitonlab.geodesic import (
    DiscretePath,
    PhiSpec,
    VariationField,
    conserved_quantity,
    first_variation,
    integrate_phi_geodesic,
    j_functional,
    riemann_distance,
)
from solitonlab.geometry import curvature_pack, gram_drift, orthonormal_frame, parallel_transport, riemann_symmetry_residual
from solitonlab.rho import rho
from solitonlab.variation import InequalityLedger, TestFunction, _bound_rhs, _fmt, closed_bound

coord = st.floats(-5, 5, allow_nan=False)
point2 = st.tuples(coord, coord).map(np.array)
point3 = st.tuples(coord, coord, coord).map(np.array)
QUARTER = PhiSpec.c_times_R(0.25)


# --- geometry -------------------------------------------------------------------------


@given(p=point3)
def test_riemann_symmetries_on_product(cigar_r, p):
    pk = curvature_pack(cigar_r, p)
    assert riemann_symmetry_residual(pk) <= 1e-8
    assert pk.scalar + pk.norm2_vec(pk.grad_f) == pytest.approx(1.0, abs=1e-12)


@given(p=st.tuples(*[st.floats(-4, 4)] * 3).map(np.array))
def test_riemann_symmetries_on_bryant(bryant3, p):
    assert riemann_symmetry_residual(curvature_pack(bryant3, p)) <= 1e-5


@given(p=point2)
def test_ricci_is_half_scalar_metric_in_2d(cigar, p):
    pk = curvature_pack(cigar, p)
    assert np.max(np.abs(pk.ricci - 0.5 * pk.scalar * pk.metric)) <= 1e-10


@given(a=point2, b=point2, bend=st.floats(-1, 1))
@settings(max_examples=15)
def test_transport_is_an_isometry(cigar, a, b, bend):
    s = np.linspace(0, 1, 801)[:, None]
    normal = np.array([-(b - a)[1], (b - a)[0]])
    path = a + s * (b - a) + bend * np.sin(np.pi * s) * normal
    out = parallel_transport(cigar, path, 1.0, orthonormal_frame(cigar.metric(path[0])))
    assert gram_drift(cigar, path, out) <= 1e-6


# --- the functional ----------------------------------------------------------------


@given(a=point2, b=point2, s_bar=st.floats(0.5, 10))
def test_j_is_reversal_invariant_and_bounded_below(cigar, a, b, s_bar):
    fwd = DiscretePath.straight(a, b, s_bar, 64)
    rev = DiscretePath(fwd.samples[::-1].copy(), s_bar)
    J = j_functional(cigar, QUARTER, fwd)
    assert J == pytest.approx(j_functional(cigar, QUARTER, rev), rel=1e-12)
    assert J > 0


@given(a=point2, b=point2, s_bar=st.floats(0.1, 10), c0=st.floats(0.01, 3))
def test_flat_straight_line_value(a, b, s_bar, c0):
    from solitonlab.models import ModelSpec, build_model

    flat = build_model(ModelSpec("euclidean", n=2, phi=("const", c0)))
    J = j_functional(flat, PhiSpec.custom("phi"), DiscretePath.straight(a, b, s_bar, 16))
    assert J == pytest.approx(float((b - a) @ (b - a)) / s_bar + 2 * c0 * s_bar, rel=1e-12, abs=1e-12)


@given(x=point2, angle=st.floats(0, 2 * math.pi), speed=st.floats(0.1, 3), c=st.floats(0.05, 1.0))
@settings(max_examples=15)
def test_conservation_on_cigar(cigar, x, angle, speed, c):
    v0 = speed * np.array([math.cos(angle), math.sin(angle)])
    sol = integrate_phi_geodesic(cigar, PhiSpec.c_times_R(c), x, v0, 5.0, step=1e-3)
    _, drift = conserved_quantity(sol)
    assert drift <= 1e-8


@given(mode=st.integers(1, 3), direction=st.tuples(st.floats(-1, 1), st.floats(-1, 1)), wobble=st.floats(-0.5, 0.5))
@settings(max_examples=10)
def test_first_variation_is_half_the_derivative_of_j(cigar, mode, direction, wobble):
    s = np.linspace(0, 1, 2001)
    X = np.stack([0.3 + s, wobble * np.sin(2 * s)], axis=1)
    path = DiscretePath(X, 1.0)
    U = VariationField.from_profile(path.s, 1.0, lambda t: np.sin(mode * np.pi * t), np.array(direction))
    h = 1e-4
    fd = (j_functional(cigar, QUARTER, DiscretePath(X + h * U.vectors, 1.0))
          - j_functional(cigar, QUARTER, DiscretePath(X - h * U.vectors, 1.0))) / (4 * h)
    assert first_variation(cigar, QUARTER, path, U) == pytest.approx(fd, abs=1e-6)


@given(r=st.floats(0.05, 50))
@settings(max_examples=10)
def test_cigar_distance_closed_form(cigar, r):
    assert riemann_distance(cigar, np.zeros(2), np.array([r, 0.0])) == pytest.approx(2 * math.asinh(r), abs=1e-5)


# --- ledgers ------------------------------------------------------------------------


@given(s_bar=st.floats(2, 100))
def test_trapezoid_integrals(s_bar):
    z = TestFunction.trapezoid(s_bar)
    s = np.linspace(0, s_bar, 200_001)
    dz = np.gradient(z.value(s), s)
    assert z.int_dz2() == pytest.approx(np.trapezoid(dz * dz, s), rel=1e-3)
    assert z.int_abs_zdz() == pytest.approx(np.trapezoid(np.abs(z.value(s) * dz), s), rel=1e-3)


@given(n=st.integers(2, 6), c=st.floats(0.01, 5), frac=st.floats(0, 0.999999))
def test_bound_rhs_below_closed_bound_when_c_window_holds(n, c, frac):
    C = -2 * c + frac * (1 + 2 * c)  # any C in [-2c, 1)
    assume(C < 1)
    assert _bound_rhs(n, c, C, TestFunction.trapezoid(10.0)) < closed_bound(n, c)


@given(lhs=st.floats(-1e3, 1e3), gap=st.floats(-1e-6, 1e-6))
def test_ledger_holds_iff_slack_above_tolerance(lhs, gap):
    led = InequalityLedger("p", lhs, lhs + gap)
    assert led.holds == (led.slack >= -1e-8)


@given(C=st.floats(1.0, 10.0), c=st.floats(0.01, 2))
def test_c_window_flags_every_violation(C, c):
    rec = DecayRecord("m", [0], [1], 5.0, c, C, 1.0, 0.1, 1.0, [0], 1.0, 0.1, 1.0, True, 0.2, True)
    assert not c_window_check([rec]).ok
    assert c_window_check([dataclasses.replace(rec, converged=False)]).ok


# --- rho ----------------------------------------------------------------------------


@given(y=point2, s_bar=st.floats(0.5, 5))
@settings(max_examples=10)
def test_flat_rho_closed_form(flat, y, s_bar):
    assume(np.linalg.norm(y) > 1e-3)
    sample = rho(flat, PhiSpec.custom("phi"), np.zeros(2), y, s_bar, multistart=1, diagnose=False)
    assert sample.rho == pytest.approx(float(y @ y) / s_bar + 0.5 * s_bar, rel=1e-9)


# --- plumbing -----------------------------------------------------------------------


@given(v=st.floats(allow_nan=False, allow_infinity=False))
def test_csv_floats_round_trip(v):
    assert float(_fmt(v)) == v


@given(K=st.integers(-5, 1000))
def test_resolution_k_validation(K):
    raw = {"model": "cigar", "resolution": {"K": K}}
    if K >= 2:
        assert config_from_dict(raw).resolution.K == K
    else:
        with pytest.raises(ConfigError) as err:
            config_from_dict(raw)
        assert err.value.field == "resolution.K"
