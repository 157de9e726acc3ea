import numpy as np
import pytest

from solitonlab.bryant import BryantProfile, ShootingError, bryant_solve
from solitonlab.errors import ConstructionError, SpecError
from solitonlab.geometry import check_soliton_identities, curvature_pack
from solitonlab.models import ModelSpec, build_model, cigar_distance_from_tip, cigar_radius_at_distance


def test_cigar_closed_forms(cigar):
    p = np.array([[0.7, -1.3], [2.0, 0.5]])
    q = np.sum(p * p, axis=1)
    assert np.allclose(cigar.metric(p), 4 / (1 + q)[:, None, None] * np.eye(2), rtol=1e-15)
    assert np.allclose(cigar.fields["f"](p), -np.log1p(q), rtol=1e-15)
    assert np.allclose(cigar.fields["R"](p), 1 / (1 + q), rtol=1e-15)
    assert cigar.soliton and cigar.dim == 2


def test_flat_model(flat):
    p = np.array([1.0, 2.0])
    assert not flat.soliton
    assert flat.fields["phi"](p) == 0.25
    assert flat.fields["f"](p) == 0.0
    assert np.array_equal(flat.metric(p), np.eye(2))


def test_cigar_product_pulls_back_the_cigar(cigar, cigar_r):
    p = np.array([0.4, -0.9, 17.0])
    assert cigar_r.dim == 3
    assert cigar_r.fields["R"](p) == pytest.approx(float(cigar.fields["R"](p[:2])), rel=1e-15)
    pk = curvature_pack(cigar_r, p)
    assert pk.scalar + pk.norm2_vec(pk.grad_f) == pytest.approx(1.0, abs=1e-13)


@pytest.mark.parametrize("spec", [
    ModelSpec("euclidean", n=7),
    ModelSpec("euclidean", n=1),
    ModelSpec("bryant", n=2),
    ModelSpec("cigar_product", k=0),
    ModelSpec("euclidean", n=2, phi=("const", -1.0)),
    ModelSpec("torus"),
])
def test_invalid_specs(spec):
    with pytest.raises(SpecError):
        build_model(spec)


def test_distance_conversions_round_trip():
    d = np.array([0.5, 5.0, 40.0])
    assert np.allclose(cigar_distance_from_tip(cigar_radius_at_distance(d)), d, rtol=1e-14)


# --- Bryant ---------------------------------------------------------------------------


@pytest.mark.parametrize("n", [3, 4])
def test_bryant_profile_qualitative_shape(n):
    prof = bryant_solve(n, -0.2, r_max=20, tol=1e-8)
    assert prof.hamiltonian_drift <= 1e-7
    d = prof.diagnostics
    assert d["w_prime_positive"] and d["fp_negative"] and d["R_positive"] and d["R_decreasing"]
    q = prof.radial(np.linspace(0, 19, 200))
    R = q["R"]
    assert R[0] == pytest.approx(R.max())
    assert np.all(np.diff(R) < 0)
    # normalised: R + f'^2 = 1 by construction of R, geometric R agrees
    geo = prof.scalar_curvature_geometric(np.linspace(0.5, 19, 50))
    assert np.max(np.abs(geo - (1 - prof.radial(np.linspace(0.5, 19, 50))["fp"] ** 2))) <= 1e-4


def test_bryant_zero_parameter_degenerates():
    with pytest.raises(ShootingError) as err:
        bryant_solve(3, 0.0, r_max=20, tol=1e-8)
    assert isinstance(err.value, ConstructionError)
    assert "R0" in err.value.diagnostics


def test_bryant_positive_parameter_is_not_retried():
    with pytest.raises(ConstructionError):
        build_model(ModelSpec("bryant", n=3, shoot_param=0.3))


def test_bryant_profile_csv_round_trip(tmp_path):
    prof = bryant_solve(3, -0.2, r_max=10, tol=1e-8)
    path = prof.to_csv(tmp_path / "profile.csv")
    assert path.read_text().splitlines()[0] == "r,w,wp,fp"
    back = BryantProfile.from_csv(path, 3)
    r = np.linspace(0.01, 9.5, 37)
    a, b = prof.radial(r), back.radial(r)
    for key in ("w", "fp", "R", "f"):
        assert np.allclose(a[key], b[key], rtol=1e-12, atol=1e-14)


def test_gradient_of_f_is_at_most_one(cigar, cigar_r, bryant3):
    for m in (cigar, cigar_r, bryant3):
        grid = np.random.default_rng(3).uniform(-4, 4, size=(200, m.dim))
        rep = check_soliton_identities(m, grid)
        assert not rep.flags["grad_f_exceeds_one"]
