"""Acceptance criteria 1-10, each at its stated tolerance.

Every test records one PASS/FAIL line; the lines are printed in the terminal
summary (see conftest.py).  Studies shared by criteria 7-10 are run once.
"""
import time

import numpy as np
import pytest

from hihomog import builtin
from hihomog.cell import adjoint_tensor, solve_all, solve_correctors
from hihomog.coefficients import CATALOGUE, _encode_matrix
from hihomog.harness import ExperimentConfig, run_convergence, run_smoothing_suite, run_structure_suite
from hihomog.potentials import cell_potentials
from hihomog.resolvents import FineProblem, assemble_M, b_coefficients, solve_fine, symbol_table
from hihomog.spectral import SpectralField
from test_cell import dense_cell_oracle
from test_resolvents import dense_fine_oracle, unit_f

RESULTS = []

EPS_7 = [1 / 8, 1 / 16, 1 / 32, 1 / 64]
EPS_256 = [1 / 8, 1 / 16, 1 / 32, 1 / 64, 1 / 128, 1 / 256]

ALL_BUILTINS = [(name, {}) for name in sorted(CATALOGUE)] + [("nonsym", {"d": 2}), ("complex", {"d": 2}),
                                                             ("harmonic", {"m": 2}), ("constant", {"d": 2, "m": 2})]


def record(criterion, passed, detail):
    RESULTS.append(f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}")
    return passed


_REPORTS = {}


def study(name, eps, **params):
    key = (name, tuple(eps), tuple(sorted(params.items())))
    if key not in _REPORTS:
        t = time.perf_counter()
        cfg = ExperimentConfig({"builtin": name, "params": params}, eps=list(eps))
        _REPORTS[key] = (run_convergence(cfg), time.perf_counter() - t)
    return _REPORTS[key][0]


def slope(report, key):
    s = report.slopes.get(key)
    return None if s is None else s["slope"]


# ----------------------------------------------------------------------

def test_criterion_1_exactness_collapse():
    rng = np.random.default_rng(11)
    worst, bad = 0.0, []
    for d in (1, 2):
        for m in (1, 2, 3):
            for n in (1, 2):
                A0 = builtin("constant", d=d, m=m, n=n)
                k = A0.basis.mbar * n
                X = rng.standard_normal((k, k)) + 1j * rng.standard_normal((k, k))
                mat = 3 * np.eye(k) + 0.4 * (X - X.conj().T)
                params = {"d": d, "m": m, "n": n, "matrix": _encode_matrix(mat)}
                cfg = ExperimentConfig({"builtin": "constant", "params": params}, eps=[1 / 8, 1 / 16, 1 / 32])
                A = cfg.load_coefficients()
                cell = solve_all(A, 2)
                pots = cell_potentials(cell)
                tau = assemble_M(b_coefficients(cell)).symbol(symbol_table(d))
                rep = run_convergence(cfg, A=A, cell=cell)
                err = max(max(r["l2"], r["l2_k1"], r["hm_corrector"]) for r in rep.rows)
                worst = max(worst, err)
                ok = (np.all(cell.N.coeffs == 0) and np.all(cell.g.coeffs == 0)
                      and all(np.all(p.G.coeffs == 0) for p in pots.values())
                      and np.allclose(cell.effective, A.mean(), rtol=0, atol=1e-15)
                      and np.all(tau == 0) and err <= 10 * cfg.tol and rep.passed)
                if not ok:
                    bad.append((d, m, n))
    passed = record(1, not bad, f"12 constant arrays (d<=2, m<=3, n<=2); worst error {worst:.1e}; failures {bad}")
    assert passed


@pytest.mark.parametrize("m", [1, 2])
def test_criterion_2_closed_form(m):
    A = builtin("harmonic", m=m)
    cell = solve_correctors(A, 4 * A.band + 2)
    if m == 1:
        exact = SpectralField.from_function(lambda y: np.sin(2 * np.pi * y) / (4 * np.pi), 1, cell.cutoff)
    else:
        exact = SpectralField.from_function(lambda y: -np.cos(2 * np.pi * y) / (8 * np.pi ** 2), 1, cell.cutoff)
    dA = abs(cell.effective[0, 0, 0, 0] - 0.5)
    dN = float(np.max(np.abs(cell.N.coeffs[0, 0, 0] - exact.coeffs)))
    passed = record(2, dA <= 1e-8 and dN <= 1e-8, f"m={m}: |A_hat - 1/2| = {dA:.1e}, max|N - closed form| = {dN:.1e}")
    assert passed


def test_criterion_3_dense_oracle():
    worst = 0.0
    for name in ("nonsym", "complex"):
        for m in (1, 2):
            A = builtin(name, m=m)
            for cutoff in (4, 8):
                ref = dense_cell_oracle(A, cutoff)
                got = solve_correctors(A, cutoff, tol=1e-13).N.coeffs[:, 0]
                worst = max(worst, np.max(np.abs(got - ref)) / np.max(np.abs(ref)))
            f = unit_f(1, A.n)
            for K in (2, 3, 4):
                ref = dense_fine_oracle(A, K, f, 8)
                got = solve_fine(FineProblem(A, K, f, 8), tol=1e-13).u.to_field().resize(ref.cutoff)
                worst = max(worst, np.max(np.abs(got.coeffs - ref.coeffs)) / np.max(np.abs(ref.coeffs)))
    passed = record(3, worst <= 1e-8, f"cell and fine solves vs dense Galerkin, worst relative gap {worst:.1e}")
    assert passed


def test_criterion_4_structural_identities(cells):
    failed, worst = [], {}
    for name, params in ALL_BUILTINS:
        rep = run_structure_suite(cells(name, **params))
        for c in rep.checks:
            if c["threshold"] != np.inf and c["op"] == "<=":
                worst[c["name"]] = max(worst.get(c["name"], 0.0), c["value"])
        if not rep.passed:
            failed.append(name)
    keys = ("divergence of g (relative to flux)", "potential representation (relative to flux)",
            "potential skew symmetry (exact)", "two-scale identity: representation")
    detail = ", ".join(f"{k.split(' (')[0]} {worst.get(k, 0):.1e}" for k in keys)
    passed = record(4, not failed, f"{len(ALL_BUILTINS)} families; {detail}; failures {failed}")
    assert passed


def test_criterion_5_smoothing_suite():
    t = time.perf_counter()
    rep = run_smoothing_suite(seed=0, samples=50)
    dt = time.perf_counter() - t
    bad = [c["name"] for c in rep.checks if not c["passed"]]
    slopes = [f"{c['name'].split()[1]}={c['value']:.2f}" for c in rep.checks
              if c["name"].startswith("d=2") and "slope" in c["name"]]
    passed = record(5, rep.passed and dt < 60, f"{len(rep.checks)} checks in {dt:.0f}s; d=2 slopes {' '.join(slopes)}; "
                                               f"failures {bad}")
    assert passed


def test_criterion_6_adjoint_commutation(cells):
    worst = 0.0
    for name, params in ALL_BUILTINS:
        cell = cells(name, **params)
        worst = max(worst, float(np.max(np.abs(cell.effective_star - adjoint_tensor(cell.effective)))))
    passed = record(6, worst <= 1e-8, f"max |hom(A*) - hom(A)*| = {worst:.1e} over {len(ALL_BUILTINS)} families")
    assert passed


CRIT7 = [("separable", {}), ("skew", {}), ("nonsym", {"d": 2}), ("complex", {"d": 2}), ("nonsym", {"d": 1}),
         ("complex", {"d": 1})]


def test_criterion_7_first_order_rates():
    parts, ok = [], True
    for name, params in CRIT7:
        rep = study(name, EPS_7, m=2, **params)
        s_hm, s_l2 = slope(rep, "hm_first"), slope(rep, "l2")
        good = rep.valid and s_hm is not None and s_l2 is not None and s_hm >= 0.75 and s_l2 >= 0.75
        ok &= good
        parts.append(f"{name}{params.get('d', '')}: Hm {s_hm:.2f}, L2 {s_l2:.2f}")
    passed = record(7, ok, "; ".join(parts))
    assert passed


def test_criterion_8_second_order_rate():
    rep = study("skew", EPS_256, m=2)
    s1, s0 = slope(rep, "l2_k1"), slope(rep, "l2")
    tau = rep.diagnostics["tau_relative"]
    passed = record(8, rep.valid and tau > 1e-6 and s1 >= 1.75 and s0 <= 1.3,
                    f"skew d=2 m=2, eps to 1/256: corrected slope {s1:.2f}, uncorrected {s0:.2f}, tau/b-scale {tau:.1e}")
    assert passed


@pytest.mark.xfail(strict=True, reason="d=1 flux remainder vanishes, so K1 = 0 and the uncorrected rate is already 2; "
                                       "see decisions ledger")
@pytest.mark.parametrize("name", ["complex", "nonsym"])
def test_criterion_8_literal_one_dimensional(name):
    rep = study(name, EPS_256, m=2, d=1)
    s1, s0 = slope(rep, "l2_k1"), slope(rep, "l2")
    tau = rep.diagnostics["tau_relative"]
    passed = record(8, rep.valid and tau > 1e-6 and s1 >= 1.75 and s0 <= 1.3,
                    f"literal d=1 {name} m=2: corrected slope {s1:.2f}, uncorrected {s0:.2f} (needs <= 1.3), "
                    f"tau/b-scale {tau:.1e} (needs > 1e-6)")
    assert passed


def test_criterion_9_symmetric_cancellation():
    parts, ok = [], True
    for name, params, eps in (("harmonic", {"m": 2}, EPS_256), ("separable", {"m": 2}, EPS_7)):
        rep = study(name, eps, **params)
        tau, s0 = rep.diagnostics["tau_relative"], slope(rep, "l2")
        good = rep.valid and tau <= 1e-8 and s0 is not None and s0 >= 1.75
        ok &= good
        parts.append(f"{name}: tau/b-scale {tau:.1e}, zeroth-order L2 slope {s0:.2f}")
    passed = record(9, ok, "; ".join(parts))
    assert passed


def test_criterion_10_energy_bound():
    # make sure every study of criteria 7-9 has run (cached if already done)
    for name, params in CRIT7:
        study(name, EPS_7, m=2, **params)
    study("skew", EPS_256, m=2)
    study("harmonic", EPS_256, m=2)
    ratios = [r["energy_ratio"] for rep, _ in _REPORTS.values() for r in rep.rows]
    worst = max(ratios)
    passed = record(10, worst <= 1 + 1e-6, f"{len(ratios)} fine solves, max ||u||_Hm min(1,l0)/||f||_H-m = {worst:.4f}")
    assert passed
