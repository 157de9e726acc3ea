import numpy as np
import pytest

from solitonlab.errors import DomainError, GeometryError, UsageError
from solitonlab.geometry import (
    ScalarField,
    check_soliton_identities,
    curvature_pack,
    gram_drift,
    orthonormal_frame,
    parallel_transport,
    riemann_symmetry_residual,
)
from solitonlab.models import ManifoldModel


def test_flat_space_has_no_curvature(flat):
    pk = curvature_pack(flat, np.array([0.3, -1.2]))
    assert np.all(pk.riemann == 0)
    assert np.all(pk.ricci == 0)
    assert pk.scalar == 0


def test_cigar_tip_values(cigar):
    pk = curvature_pack(cigar, np.zeros(2))
    assert pk.scalar == pytest.approx(1.0, abs=1e-12)
    assert pk.ricci_norm2 == pytest.approx(0.5, abs=1e-12)


def test_cigar_unit_radius_values(cigar):
    pk = curvature_pack(cigar, np.array([1.0, 0.0]))
    assert pk.scalar == pytest.approx(0.5, abs=1e-12)
    assert pk.norm2_vec(pk.grad_f) == pytest.approx(0.5, abs=1e-12)
    assert pk.ricci_norm2 == pytest.approx(0.125, abs=1e-12)


def test_riemann_symmetries_and_traces(cigar_r, rng):
    p = rng.uniform(-3, 3, size=(50, 3))
    pk = curvature_pack(cigar_r, p)
    assert riemann_symmetry_residual(pk) <= 1e-8
    ric = np.einsum("...ab,...ajkb->...jk", pk.metric_inv, pk.riemann)
    assert np.max(np.abs(ric - pk.ricci)) <= 1e-8
    assert np.max(np.abs(np.einsum("...ij,...ij->...", pk.metric_inv, pk.ricci) - pk.scalar)) <= 1e-8


def test_two_dimensional_ricci_is_half_scalar_times_metric(cigar, rng):
    p = rng.uniform(-5, 5, size=(100, 2))
    pk = curvature_pack(cigar, p)
    assert np.max(np.abs(pk.ricci - 0.5 * pk.scalar[:, None, None] * pk.metric)) <= 1e-10


def test_finite_difference_curvature_matches_closed_form(cigar, cigar_fd):
    ax = np.linspace(-3, 3, 20)
    p = np.array([(a, b) for a in ax for b in ax])
    exact = curvature_pack(cigar, p)
    fd = curvature_pack(cigar_fd, p)
    assert np.max(np.abs(fd.riemann - exact.riemann)) <= 1e-5
    assert np.max(np.abs(fd.christoffel - exact.christoffel)) <= 1e-5


def test_weighted_laplacian_is_assembled_exactly(cigar):
    phi = cigar.fields["R"].scaled(0.25)
    pk = curvature_pack(cigar, np.array([[0.4, 1.1], [2.0, -0.3]]), phi)
    expected = pk.lap_phi - np.einsum("kij,ki,kj->k", pk.metric, pk.grad_f, pk.grad_phi)
    assert np.array_equal(pk.f_lap_phi, expected)


def test_out_of_domain_point_is_rejected(cigar, bryant3):
    with pytest.raises(DomainError):
        curvature_pack(cigar, np.array([np.nan, 0.0]))
    with pytest.raises(DomainError):
        curvature_pack(bryant3, np.array([1e4, 0.0, 0.0]))


def test_indefinite_metric_is_a_geometry_error():
    bad = ManifoldModel("bad", 2, lambda p: np.broadcast_to(np.diag([1.0, -1.0]), p.shape[:-1] + (2, 2)).copy(),
                        {"f": ScalarField.constant(0, 2), "R": ScalarField.constant(0, 2)}, soliton=False)
    with pytest.raises(GeometryError):
        curvature_pack(bad, np.zeros(2))


# --- parallel transport --------------------------------------------------------------


def test_flat_transport_is_identity(flat):
    s = np.linspace(0, 1, 101)
    path = np.stack([np.cos(s), s**2], axis=1)
    out = parallel_transport(flat, path, 1.0, np.array([1.0, 0.0]))
    assert np.allclose(out[:, 0], [1.0, 0.0], atol=1e-14)


def test_cigar_radial_transport_stays_radial(cigar):
    K = 400
    path = np.stack([np.linspace(0, 2, K + 1), np.zeros(K + 1)], axis=1)
    e = np.array([0.5, 0.0])  # unit in g at the tip
    out = parallel_transport(cigar, path, 1.0, e)[:, 0]
    assert np.max(np.abs(out[:, 1])) <= 1e-14
    norms = np.einsum("ki,kij,kj->k", out, cigar.metric(path), out)
    assert np.max(np.abs(norms - 1.0)) <= 1e-6


def test_transport_preserves_gram_matrix(cigar):
    K = 800
    s = np.linspace(0, 1, K + 1)
    path = np.stack([0.3 + 2 * s, np.sin(3 * s)], axis=1)
    frame = orthonormal_frame(cigar.metric(path[0]))
    out = parallel_transport(cigar, path, 1.0, frame)
    assert gram_drift(cigar, path, out) <= 1e-6


# --- soliton identities ----------------------------------------------------------------


@pytest.mark.parametrize("fixture", ["cigar", "cigar_r"])
def test_identities_on_closed_form_solitons(fixture, request):
    model = request.getfixturevalue(fixture)
    grid = np.random.default_rng(0).uniform(-5, 5, size=(400, model.dim))
    rep = check_soliton_identities(model, grid)
    assert rep.max_residual() <= 1e-7
    assert not any(rep.flags.values())


def test_identities_on_bryant(bryant3):
    grid = np.random.default_rng(0).uniform(-5, 5, size=(400, 3))
    rep = check_soliton_identities(bryant3, grid)
    assert rep.max_residual() <= 1e-4


def test_flat_space_fails_the_normalisation(flat):
    rep = check_soliton_identities(flat, np.zeros((3, 2)), require_soliton=False)
    assert rep.maxima["ricci_f"] == 0
    assert rep.maxima["hamiltonian"] == pytest.approx(1.0)
    assert rep.flags["R_nonpositive"]


def test_identities_need_a_soliton(flat):
    with pytest.raises(UsageError):
        check_soliton_identities(flat, np.zeros((3, 2)))
