import numpy as np
import pytest

from hihomog import builtin
from hihomog.cell import (CellData, adjoint_tensor, check_symbol_positivity, divergence_residual, refine_cutoff,
                          solve_all, solve_correctors)
from hihomog.coefficients import CATALOGUE, CoefficientError
from hihomog.spectral import SpectralField


def dense_cell_oracle(A, cutoff):
    """Dense Galerkin assembly of the d = 1 cell problem (mbar = 1), all columns k."""
    m, n = A.m, A.n
    ks = np.array([k for k in range(-cutoff, cutoff + 1) if k != 0])
    p = (2j * np.pi * ks) ** m
    a = A.entries.coeffs[0, 0]  # (j, k, lattice)
    C = A.entries.cutoff

    def ahat(j, k, q):
        return a[j, k, C + q] if abs(q) <= C else 0.0

    size = n * len(ks)
    B = np.zeros((size, size), dtype=complex)
    for r, q in enumerate(ks):
        for c, l in enumerate(ks):
            for j in range(n):
                for k in range(n):
                    B[j * len(ks) + r, k * len(ks) + c] = np.conj(p[r]) * ahat(j, k, q - l) * p[c]
    out = np.zeros((n, n, 2 * cutoff + 1), dtype=complex)  # (column k, component i, lattice)
    for k0 in range(n):
        rhs = np.concatenate([-np.conj(p) * np.array([ahat(j, k0, q) for q in ks]) for j in range(n)])
        x = np.linalg.solve(B, rhs).reshape(n, len(ks))
        out[k0][:, ks + cutoff] = x
    return out


@pytest.mark.parametrize("m", [1, 2])
def test_harmonic_closed_form(m):
    A = builtin("harmonic", m=m)
    cell = solve_correctors(A, 4 * A.band + 2)
    assert cell.effective[0, 0, 0, 0] == pytest.approx(0.5, abs=1e-8)
    if m == 1:
        exact = SpectralField.from_function(lambda y: np.sin(2 * np.pi * y) / (4 * np.pi), 1, cell.cutoff)
    else:
        exact = SpectralField.from_function(lambda y: -np.cos(2 * np.pi * y) / (8 * np.pi ** 2), 1, cell.cutoff)
    assert np.max(np.abs(cell.N.coeffs[0, 0, 0] - exact.coeffs)) < 1e-8


@pytest.mark.parametrize("name,params", [("nonsym", {"m": 1}), ("nonsym", {"m": 2}), ("complex", {"m": 1}),
                                         ("complex", {"m": 2}), ("constant", {"m": 2})])
@pytest.mark.parametrize("cutoff", [3, 8])
def test_matches_dense_oracle(name, params, cutoff):
    A = builtin(name, **params)
    cell = solve_correctors(A, cutoff, tol=1e-13)
    ref = dense_cell_oracle(A, cutoff)
    got = cell.N.coeffs[:, 0]
    scale = max(np.max(np.abs(ref)), 1e-300)
    assert np.max(np.abs(got - ref)) <= 1e-8 * scale + 1e-14


def test_constant_collapse():
    for d, m, n in [(1, 1, 1), (1, 3, 2), (2, 2, 2), (2, 3, 1)]:
        A = builtin("constant", d=d, m=m, n=n)
        cell = solve_all(A, 2)
        assert np.all(cell.N.coeffs == 0) and np.all(cell.g.coeffs == 0)
        assert np.all(cell.Nstar.coeffs == 0) and np.all(cell.gstar.coeffs == 0)
        assert np.allclose(cell.effective, A.mean(), atol=0, rtol=0)


def test_cutoff_below_band_rejected():
    with pytest.raises(CoefficientError):
        solve_correctors(builtin("harmonic"), 8)


def test_one_dimensional_flux_is_constant(cells):
    for name in ("harmonic", "nonsym", "complex"):
        cell = cells(name)
        assert cell.g.l2() <= 1e-10, name


@pytest.mark.parametrize("name,params", [("separable", {}), ("nonsym", {"d": 2}), ("complex", {"d": 2}),
                                         ("skew", {})])
def test_flux_remainder_structure(cells, name, params):
    cell = cells(name, **params)
    assert np.max(np.abs(cell.g.mean())) == 0.0
    assert divergence_residual(cell.g, cell.basis) <= 10 * cell.tol


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_adjoint_commutation(cells, name):
    cell = cells(name)
    assert np.max(np.abs(cell.effective_star - adjoint_tensor(cell.effective))) <= 1e-8


@pytest.mark.parametrize("name,params", [("harmonic", {"m": 2}), ("separable", {})])
def test_symmetric_scalar_self_adjoint_cell_data(cells, name, params):
    cell = cells(name, **params)
    assert np.max(np.abs(cell.Nstar.coeffs - cell.N.coeffs)) <= cell.tol
    assert np.max(np.abs(cell.gstar.coeffs - cell.g.coeffs)) <= cell.tol


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_doubling_cutoff_is_stable(name):
    A = builtin(name)
    c = refine_cutoff(A)
    assert np.max(np.abs(solve_correctors(A, 2 * c).effective - solve_correctors(A, c).effective)) <= 1e-9


def test_default_cutoff_already_converged_for_band_one_families():
    for name in ("nonsym", "complex", "skew"):
        A = builtin(name)
        assert refine_cutoff(A) == 4 * A.band + 2


@pytest.mark.parametrize("name", sorted(CATALOGUE))
def test_effective_symbol_is_positive(cells, name):
    cell = cells(name)
    assert check_symbol_positivity(cell.effective, cell.basis, cell.A.lambda0) >= cell.A.lambda0 * (1 - 1e-8)


def test_save_load_round_trip(cells, tmp_path):
    cell = cells("skew")
    cell.save(tmp_path / "c")
    back = CellData.load(tmp_path / "c")
    assert np.array_equal(back.N.coeffs, cell.N.coeffs) and np.array_equal(back.gstar.coeffs, cell.gstar.coeffs)
    assert np.array_equal(back.effective, cell.effective)
    assert back.A.name == "skew" and back.cutoff == cell.cutoff


def test_accessors(cells):
    cell = cells("nonsym", d=2)
    b = cell.basis
    assert cell.corrector(1, b[2]).comp_shape == (2,)
    assert cell.flux(0, b[0], b[1], star=True).comp_shape == (2,)
    assert cell.corrector_norms().shape == (2, 3) and np.all(np.isfinite(cell.corrector_norms()))
