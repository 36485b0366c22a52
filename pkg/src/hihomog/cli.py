"""Command line entry point: ``hihomog <command> ...``.

Exit code 0 means every verdict of the command passed, 1 means a verdict
failed or a solver aborted, 2 means bad input.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .cell import CellData, solve_all
from .coefficients import CoefficientArray, CoefficientError, parse_builtin_spec
from .galerkin import SolverError
from .harness import (ExperimentConfig, default_f_modes, f_from_modes, run_convergence, run_smoothing_suite,
                      run_structure_suite)
from .potentials import PotentialError, cell_potentials, verify_two_scale_identities
from .resolvents import (FineProblem, HomogenizedOperator, apply_K1, assemble_M, b_coefficients,
                         solve_fine, solve_homogenized)
from .spectral import SpectralField


def _coefficients(args) -> CoefficientArray:
    if args.coeffs:
        return CoefficientArray.load(args.coeffs)
    return parse_builtin_spec(args.builtin)


def _rhs(path, d: int, n: int) -> SpectralField:
    if path:
        f = SpectralField.load(path)
        if f.d != d or f.comp_shape != (n,):
            raise ValueError(f"right-hand side must be a d={d} field with {n} components")
        return f
    f = f_from_modes(default_f_modes(d, n), d, n)
    return f / f.l2()


def _emit(payload: dict, out=None) -> None:
    text = json.dumps(payload, indent=1, sort_keys=True, default=float)
    if out:
        Path(out).write_text(text)
    print(text)


def _coeff_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--coeffs", help="coefficient manifest (JSON)")
    g.add_argument("--builtin", help="builtin family, e.g. 'nonsym:m=2,d=1'")


# ----------------------------------------------------------------------
# commands

def cmd_cell_solve(args) -> int:
    A = _coefficients(args)
    cutoff = args.cutoff or 4 * A.band + 2
    cell = solve_all(A, cutoff, tol=args.tol)
    cell.save(args.out)
    _emit({"out": str(args.out), "cutoff": cutoff, "max_residual": float(np.max(cell.residuals)),
           "effective_norm": float(np.linalg.norm(cell.effective))})
    return 0


def cmd_convergence(args) -> int:
    cfg = ExperimentConfig.load(args.config)
    report = run_convergence(cfg)
    out = args.out or cfg.report
    csv_path = args.csv or cfg.csv
    report.write(out, csv_path)
    for name, v in report.verdicts.items():
        print(f"{'PASS' if v['passed'] else 'FAIL'}  {name}: {v['value']} {v['op']} {v['threshold']}")
    if not report.valid:
        print(f"INVALID  {report.error}", file=sys.stderr)
    return 0 if report.passed else 1


def _print_checks(report) -> None:
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']:.3e} {c['op']} {c['threshold']}")


def cmd_smoothing(args) -> int:
    report = run_smoothing_suite(seed=args.seed, samples=args.samples)
    if args.out:
        Path(args.out).write_text(report.to_json())
    _print_checks(report)
    return 0 if report.passed else 1


def cmd_structure(args) -> int:
    report = run_structure_suite(CellData.load(args.cell), K=args.K)
    if args.out:
        Path(args.out).write_text(report.to_json())
    _print_checks(report)
    return 0 if report.passed else 1


def cmd_potential_check(args) -> int:
    cell = CellData.load(args.cell)
    rows, ok = [], True
    Phi = SpectralField.from_function(lambda *y: np.cos(2 * np.pi * y[0]) + 0.5 * np.sin(2 * np.pi * sum(y)),
                                      cell.A.d, 2)
    for star in (False, True):
        try:
            pots = cell_potentials(cell, star=star)
        except PotentialError as exc:
            print(f"FAIL  {'adjoint ' if star else ''}flux precondition: {exc}")
            return 1
        for (k, ib), P in pots.items():
            lem = verify_two_scale_identities(P, Phi, args.K)
            row = {"star": star, "k": k, "beta": ib, "skew": P.skew_residual(), "ratio": P.ratio,
                   "representation": lem.representation, "divergence": lem.divergence,
                   "annihilation": lem.annihilation}
            row["passed"] = row["skew"] == 0.0 and lem.passed
            ok &= row["passed"]
            rows.append(row)
    _emit({"passed": ok, "potentials": rows}, args.out)
    return 0 if ok else 1


def cmd_solve_fine(args) -> int:
    A = _coefficients(args)
    f = _rhs(args.f, A.d, A.n)
    sol = solve_fine(FineProblem(A, args.K, f, args.coset_cutoff), tol=args.tol)
    sol.u.to_field().save(args.out)
    _emit({"out": str(args.out), "K": args.K, "residual": sol.residual, "iterations": sol.iterations,
           "energy_ratio": sol.energy_ratio})
    return 0 if sol.energy_ok else 1


def cmd_solve_hom(args) -> int:
    cell = CellData.load(args.cell)
    f = _rhs(args.f, cell.A.d, cell.A.n)
    sol = solve_homogenized(HomogenizedOperator.from_cell(cell), f)
    sol.u.save(args.out)
    _emit({"out": str(args.out), "u_l2": sol.u.l2(), "elliptic_ratio": sol.elliptic_ratio})
    return 0


def cmd_k1_apply(args) -> int:
    cell = CellData.load(args.cell)
    f = _rhs(args.f, cell.A.d, cell.A.n)
    M = assemble_M(b_coefficients(cell))
    K1f = apply_K1(HomogenizedOperator.from_cell(cell), M, f)
    K1f.save(args.out)
    _emit({"out": str(args.out), "K1f_l2": K1f.l2(), "b_scale": M.bt.scale})
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="hihomog", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"hihomog {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("cell-solve", help="solve the cell problems and save correctors")
    _coeff_args(p)
    p.add_argument("--cutoff", type=int, help="cell Fourier cutoff (default 4*band+2)")
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_cell_solve)

    p = sub.add_parser("convergence", help="run a convergence study from a JSON config")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="report JSON (overrides config)")
    p.add_argument("--csv", help="companion CSV (overrides config)")
    p.set_defaults(func=cmd_convergence)

    p = sub.add_parser("smoothing", help="run the smoothing-operator property suite")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=50)
    p.add_argument("--out")
    p.set_defaults(func=cmd_smoothing)

    p = sub.add_parser("structure", help="structural checks on saved cell data")
    p.add_argument("--cell", required=True)
    p.add_argument("--K", type=int, default=8, help="1/eps for the two-scale identities")
    p.add_argument("--out")
    p.set_defaults(func=cmd_structure)

    p = sub.add_parser("potential-check", help="build flux potentials and verify their identities")
    p.add_argument("--cell", required=True)
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--out")
    p.set_defaults(func=cmd_potential_check)

    p = sub.add_parser("solve-fine", help="solve (L_eps + I) u = f on the torus")
    _coeff_args(p)
    p.add_argument("--K", type=int, required=True, help="eps = 1/K")
    p.add_argument("--f", help="right-hand side field file (default: 3-mode polynomial)")
    p.add_argument("--coset-cutoff", type=int)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve_fine)

    for name, func, text in (("solve-hom", cmd_solve_hom, "solve (L_hat + I) u = f"),
                             ("k1-apply", cmd_k1_apply, "apply the first-order resolvent corrector K1")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--cell", required=True)
        p.add_argument("--f")
        p.add_argument("--out", required=True)
        p.set_defaults(func=func)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (CoefficientError, ValueError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
