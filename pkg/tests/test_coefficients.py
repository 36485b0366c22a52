import numpy as np
import pytest

from hihomog.coefficients import CATALOGUE, CoefficientArray, CoefficientError, builtin, parse_builtin_spec
from hihomog.multiindex import IndexBasis
from hihomog.spectral import SpectralField


def test_harmonic_lower_bound():
    A = builtin("harmonic", m=1)
    assert A.lambda0 == pytest.approx(1 / 3, abs=1e-12)
    assert A.lambda1 == pytest.approx(1.0, abs=1e-12)
    coarse, fine = float(A.check_coercivity(8)), float(A.check_coercivity(16))
    assert 1 / 3 - 1e-12 <= fine <= coarse <= 1 / 3 + 0.01


@pytest.mark.parametrize("d", [1, 2])
def test_skew_perturbation_of_identity_has_unit_constant(d):
    est = builtin("nonsym", rho=0.3, d=d).check_coercivity()
    assert est.admissible and float(est) == pytest.approx(1.0, abs=1e-8)
    assert float(builtin("skew", rho=0.3).check_coercivity()) == pytest.approx(1.0, abs=1e-8)


def test_nonsym_coercivity_margin():
    assert float(builtin("nonsym", rho=0.3).check_coercivity()) >= 0.5


def test_rayleigh_estimate_never_below_pointwise_bound():
    for name in CATALOGUE:
        A = builtin(name)
        assert float(A.check_coercivity()) >= A.lambda0 - 1e-10, name


def test_adjoint_is_involution_and_conjugate_transpose():
    A = builtin("nonsym", d=2)
    B = A.adjoint().adjoint()
    assert np.array_equal(B.entries.coeffs, A.entries.coeffs)
    s, c = A.adjoint().grid_values(16), A.grid_values(16)
    assert np.allclose(s[0, 0, 0, 1], np.conj(c[0, 0, 1, 0]), atol=1e-15) and np.abs(s[0, 0, 0, 1]).max() > 0.1
    assert not A.is_self_adjoint() and builtin("separable").is_self_adjoint()


def test_complex_family_adjoint_conjugates():
    A = builtin("complex")
    assert not A.is_real()
    assert np.allclose(A.adjoint().grid_values(16), np.conj(A.grid_values(16)), atol=1e-15)


def test_constant_identity():
    A = builtin("constant", d=2, m=2, n=2)
    assert A.is_constant() and A.band == 0
    assert np.allclose(A.mean(), A.basis.identity_tensor())
    with pytest.raises(CoefficientError):
        builtin("constant", matrix=np.eye(3), d=1, m=1, n=2)


def test_constant_matrix_through_manifest():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((6, 6))
    A = builtin("constant", matrix=np.eye(6) * 4 + 0.3 * (X - X.T), d=2, m=2, n=2)
    B = CoefficientArray.from_manifest(A.to_manifest())
    assert np.array_equal(A.entries.coeffs, B.entries.coeffs)


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_manifest_round_trip(tmp_path, name):
    A = builtin(name)
    A.save(tmp_path / "A.json")
    B = CoefficientArray.load(tmp_path / "A.json")
    assert B.name == A.name and B.basis == A.basis
    assert np.max(np.abs(B.entries.coeffs - A.entries.coeffs)) == 0.0


def test_builtin_errors():
    with pytest.raises(CoefficientError):
        builtin("nope")
    with pytest.raises(CoefficientError):
        builtin("nonsym", rho=0.9)
    with pytest.raises(CoefficientError):
        builtin("skew", d=1)
    with pytest.raises(CoefficientError):
        builtin("separable", bogus=1)


def test_rejects_non_elliptic_array():
    basis = IndexBasis(1, 1, 1)
    a = SpectralField.from_function(lambda y: np.cos(2 * np.pi * y), 1, 1)
    with pytest.raises(CoefficientError):
        CoefficientArray(basis, SpectralField(a.coeffs[None, None, None, None], 1))


def test_parse_builtin_spec():
    A = parse_builtin_spec("nonsym:m=1,rho=0.25,d=2")
    assert (A.m, A.d, A.n) == (1, 2, 2) and A.params["rho"] == 0.25


def test_skew_family_structure():
    A = builtin("skew")
    assert A.is_real() and not A.is_self_adjoint()
    herm = 0.5 * (A.pointwise_matrices() + np.conj(np.swapaxes(A.pointwise_matrices(), -1, -2)))
    assert np.allclose(herm, np.eye(3))
