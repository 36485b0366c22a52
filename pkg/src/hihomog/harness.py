"""Convergence studies, property suites and slope fits with JSON/CSV reports."""
from __future__ import annotations

import csv
import io
import json
import os
import platform
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import cell as cellmod
from .coefficients import CoefficientArray, builtin
from .galerkin import FormOperator, SolverError
from .potentials import PotentialError, cell_potentials, verify_two_scale_identities
from .resolvents import (FineProblem, HomogenizedOperator, ResolventError, _oscillating, apply_K1, assemble_M, b_coefficients,
                         corrector_operator, first_order_approx, residual_check, solve_fine, symbol_table)
from .spectral import SpectralField, order_weight, random_field
from .torus import CosetField

CONFIG_SCHEMA = "hihomog-experiment/1"
REPORT_SCHEMA = "hihomog-report/1"
GATE = 1e-6
STUDIES = ("zeroth", "first", "second")


def threads() -> int:
    try:
        return max(1, int(os.environ.get("HIHOMOG_THREADS", "1")))
    except ValueError:
        return 1


# ----------------------------------------------------------------------
# slope fitting

def fit_slope(points) -> dict:
    """Least-squares line through (log eps, log error); errors must be positive."""
    pts = [(float(e), float(v)) for e, v in points]
    if len(pts) < 3:
        raise ValueError("slope fit needs at least 3 points")
    if any(e <= 0 for e, _ in pts):
        raise ValueError("eps values must be positive")
    if any(not v > 0 for _, v in pts):
        raise ValueError("slope fit rejects nonpositive error values")
    x = np.log([e for e, _ in pts])
    y = np.log([v for _, v in pts])
    X = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ coef
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "fit_residual": float(np.sqrt(np.mean(resid ** 2)))}


# ----------------------------------------------------------------------
# configuration

def default_f_modes(d: int, n: int) -> list:
    """Three-mode right-hand side, unit L2 norm, every component nonzero."""
    ks = [(1,), (2,), (-3,)] if d == 1 else [(1, 0), (0, 1), (1, -1)]
    rng = np.random.default_rng(12345)
    amps = rng.standard_normal((3, n)) + 1j * rng.standard_normal((3, n))
    amps /= np.sqrt(np.sum(np.abs(amps) ** 2))
    return [{"k": list(k), "amplitude": [[float(a.real), float(a.imag)] for a in row]} for k, row in zip(ks, amps)]


def f_from_modes(modes, d: int, n: int) -> SpectralField:
    cut = max(max(abs(v) for v in md["k"]) for md in modes)
    c = np.zeros((n,) + (2 * cut + 1,) * d, dtype=complex)
    for md in modes:
        k = md["k"]
        if len(k) != d:
            raise ValueError(f"f mode {k} does not have dimension {d}")
        amp = md["amplitude"]
        if len(amp) != n:
            raise ValueError(f"f mode {k} needs {n} component amplitudes")
        c[(slice(None),) + tuple(cut + v for v in k)] += [complex(re, im) for re, im in amp]
    return SpectralField(c, d)


@dataclass
class ExperimentConfig:
    coefficients: dict
    eps: list = field(default_factory=lambda: [1 / 8, 1 / 16, 1 / 32, 1 / 64])
    f_modes: list | None = None
    cell_cutoff: int | None = None
    coset_cutoff: int | None = None
    tol: float = 1e-10
    studies: list = field(default_factory=lambda: list(STUDIES))
    report: str | None = None
    csv: str | None = None
    seed: int = 0
    schema: str = CONFIG_SCHEMA

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.schema != CONFIG_SCHEMA:
            raise ValueError(f"unsupported config schema {self.schema!r}")
        if len(self.eps) < 3:
            raise ValueError("need at least 3 eps values for slope fitting")
        for e in self.eps:
            K = 1 / Fraction(e).limit_denominator(10 ** 6)
            if K.denominator != 1 or K < 1:
                raise ValueError(f"eps {e} is not 1/K for a positive integer K")
        bad = set(self.studies) - set(STUDIES)
        if bad:
            raise ValueError(f"unknown studies {sorted(bad)}")
        if "builtin" not in self.coefficients and "file" not in self.coefficients:
            raise ValueError("coefficients need a 'builtin' name or a 'file' path")

    @property
    def Ks(self) -> list:
        return [int(round(1 / e)) for e in self.eps]

    def load_coefficients(self) -> CoefficientArray:
        c = self.coefficients
        if "file" in c:
            return CoefficientArray.load(c["file"])
        return builtin(c["builtin"], **c.get("params", {}))

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        data = dict(data)
        if "K" in data:
            data["eps"] = [1 / k for k in data.pop("K")]
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown config keys {sorted(extra)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def environment() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__}


# ----------------------------------------------------------------------
# convergence study

ERROR_KINDS = ("l2", "l2_k1", "hm_first", "hm_corrector")


@dataclass
class ConvergenceReport:
    config: dict
    coefficients: dict
    rows: list
    slopes: dict
    verdicts: dict
    diagnostics: dict
    valid: bool = True
    error: str | None = None
    environment: dict = field(default_factory=environment)
    schema: str = REPORT_SCHEMA

    @property
    def passed(self) -> bool:
        return self.valid and all(v["passed"] for v in self.verdicts.values())

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["eps", "K", "kind", "error"])
        for r in self.rows:
            for kind in ERROR_KINDS:
                w.writerow([repr(r["eps"]), r["K"], kind, repr(r[kind])])
        return buf.getvalue()

    def write(self, report=None, csv_path=None):
        if report:
            Path(report).write_text(self.to_json())
        if csv_path:
            Path(csv_path).write_text(self.to_csv())


def is_symmetric_scalar(A: CoefficientArray) -> bool:
    return A.n == 1 and A.is_real() and A.is_self_adjoint()


def _one_eps(A, cell, hop, f, u, K1f, K, J, tol):
    eps = 1.0 / K
    m = A.m
    sol = solve_fine(FineProblem(A, K, f, J), tol)
    ue = sol.u
    U = CosetField.from_field(u, K, J)
    ut = first_order_approx(cell, u, K, J)
    corr = corrector_operator(cell, f, hop, K, J)
    plain = CosetField.from_field(u, K, J) + corrector_unsmoothed(cell, u, K, J) * eps ** m
    res = residual_check(A, ut, f)
    row = {
        "eps": eps, "K": K,
        "l2": (ue - U).l2(),
        "l2_k1": (ue - CosetField.from_field(u + K1f * eps, K, J)).l2(),
        "hm_first": (ue - ut).norms(m)["hm"],
        "hm_corrector": (ue - U - corr.Kf * eps ** m).norms(m)["hm"],
        "hm_plain_corrector": (ue - plain).norms(m)["hm"],
        "residual_h_negative": res.F_h_negative,
        "steklov_defect": res.steklov_defect,
        "energy_ratio": sol.energy_ratio,
        "corrector_hm_ratio": corr.hm_ratio,
        "corrector_l2_ratio": corr.l2_ratio,
        "solver_residual": sol.residual,
        "iterations": sol.iterations,
    }
    return row


def corrector_unsmoothed(cell, u, K, J):
    return _oscillating(cell, u, K, J, smooth=False)


def _slope_or_none(rows, key):
    pts = [(r["eps"], r[key]) for r in rows]
    if any(not v > 0 for _, v in pts):
        return None
    return fit_slope(pts)


def _verdict(value, threshold, op=">=", note=""):
    if value is None:
        return {"value": None, "threshold": threshold, "op": op, "passed": False, "note": note or "not measurable"}
    ok = value >= threshold if op == ">=" else value <= threshold
    return {"value": value, "threshold": threshold, "op": op, "passed": bool(ok), "note": note}


def run_convergence(cfg: ExperimentConfig, A: CoefficientArray | None = None, cell=None) -> ConvergenceReport:
    """Cell solves once, then one fine solve per eps; verdicts from the recorded rows."""
    A = cfg.load_coefficients() if A is None else A
    d, n, m = A.d, A.n, A.m
    f = f_from_modes(cfg.f_modes or default_f_modes(d, n), d, n)
    f = f / f.l2()
    coef_info = {"name": A.name, "params": A.params, "d": d, "m": m, "n": n,
                 "lambda0": A.lambda0, "lambda1": A.lambda1}
    rows, slopes, verdicts, diag = [], {}, {}, {}
    coerc = A.check_coercivity()
    diag["coercivity_estimate"] = float(coerc)
    if not coerc.admissible:
        return ConvergenceReport(cfg.to_dict(), coef_info, rows, slopes, verdicts, diag, False,
                                 "coefficient family failed the coercivity gate")
    try:
        cutoff = cfg.cell_cutoff or 4 * A.band + 2
        cell = cellmod.solve_all(A, cutoff, tol=min(cfg.tol, 1e-10)) if cell is None else cell
        hop = HomogenizedOperator.from_cell(cell)
        u = hop.solve(f)
        M = assemble_M(b_coefficients(cell))
        tau_rel = M.relative_size(symbol_table(d))
        K1f = apply_K1(hop, M, f)
        diag.update({"tau_relative": tau_rel, "b_scale": M.bt.scale, "b_max": M.bt.max_abs,
                     "cell_cutoff": cutoff, "K1f_l2": K1f.l2(), "u_l2": u.l2()})
        # the corrector of a shifted mode must fit inside every coset
        J = cfg.coset_cutoff or max(4 * A.band + f.cutoff + 2, cell.cutoff + f.cutoff)
        diag["coset_cutoff"] = J
        with ThreadPoolExecutor(max_workers=threads()) as pool:
            futures = [pool.submit(_one_eps, A, cell, hop, f, u, K1f, K, J, cfg.tol) for K in cfg.Ks]
            for fut in futures:
                rows.append(fut.result())
    except (SolverError, ResolventError) as exc:
        return ConvergenceReport(cfg.to_dict(), coef_info, rows, slopes, verdicts, diag, False, str(exc))
    rows.sort(key=lambda r: -r["eps"])

    exact_tol = 10 * cfg.tol
    if A.is_constant():
        worst = max(max(r["l2"], r["l2_k1"], r["hm_corrector"]) for r in rows)
        verdicts["exact_collapse"] = _verdict(worst, exact_tol, "<=", "constant coefficients: u^eps = u")
        slopes = {k: None for k in ERROR_KINDS}
        slopes["hm_first"] = _slope_or_none(rows, "hm_first")
    else:
        for key in ERROR_KINDS + ("residual_h_negative",):
            slopes[key] = _slope_or_none(rows, key)
        sl = lambda key: None if slopes[key] is None else slopes[key]["slope"]
        sym = is_symmetric_scalar(A)
        if "zeroth" in cfg.studies:
            verdicts["zeroth_l2"] = _verdict(sl("l2"), 1.75 if sym else 0.75, ">=",
                                             "real symmetric scalar: order 2" if sym else "order 1")
        if "first" in cfg.studies:
            verdicts["first_hm"] = _verdict(sl("hm_first"), 0.75)
            verdicts["corrector_hm"] = _verdict(sl("hm_corrector"), 0.75)
            verdicts["residual_h_negative"] = _verdict(sl("residual_h_negative"), 0.75)
        if "second" in cfg.studies:
            if tau_rel > GATE:
                verdicts["second_l2_k1"] = _verdict(sl("l2_k1"), 1.75, ">=", "K1 correction active")
                diag["second_order_study"] = "K1"
            else:
                verdicts["second_l2_zeroth"] = _verdict(sl("l2"), 1.75, ">=", "tau below gate: zeroth-order eps^2 study")
                diag["second_order_study"] = "zeroth"
    verdicts["energy_bound"] = _verdict(max(r["energy_ratio"] for r in rows), 1.0 + 1e-6, "<=")
    return ConvergenceReport(cfg.to_dict(), coef_info, rows, slopes, verdicts, diag)


# ----------------------------------------------------------------------
# smoothing suite

def _overlap(x: np.ndarray, y: np.ndarray, shift) -> complex:
    """sum_j conj(x(j)) y(j + shift) for centred coefficient arrays of equal shape."""
    sl_x, sl_y = [], []
    for s, size in zip(shift, x.shape):
        s = int(s)
        if abs(s) >= size:
            return 0j
        sl_x.append(slice(max(0, -s), size - max(0, s)))
        sl_y.append(slice(max(0, s), size - max(0, -s)))
    return complex(np.sum(np.conj(x[tuple(sl_x)]) * y[tuple(sl_y)]))


def oscillating_pair(a: SpectralField, phi: SpectralField, b: SpectralField, psi: SpectralField, K: int,
                     smooth: bool = True) -> complex:
    """(a(Kx) S phi, b(Kx) S psi) on the unit torus, exact; a, b are cell fields.

    Pass ``b = 1`` (constant field) with ``smooth`` applied to phi only via
    :func:`oscillating_form`.
    """
    eps = 1.0 / K
    sp = phi.steklov(eps).coeffs if smooth else phi.coeffs
    ss = psi.steklov(eps).coeffs if smooth else psi.coeffs
    total = 0j
    for la, va in _modes(a):
        for lb, vb in _modes(b):
            total += np.conj(va) * vb * _overlap(sp, ss, K * (np.array(la) - np.array(lb)))
    return total


def oscillating_form(b: SpectralField, phi: SpectralField, psi: SpectralField, K: int) -> complex:
    """(b(Kx) S phi, psi)."""
    sp = phi.steklov(1.0 / K).coeffs
    total = 0j
    for l, v in _modes(b):
        total += np.conj(v) * _overlap(sp, psi.coeffs, K * np.array(l))
    return total


def _modes(f: SpectralField):
    q = f.freqs().reshape(f.d, -1).T
    c = f.coeffs.ravel()
    return [(tuple(q[i]), c[i]) for i in np.flatnonzero(np.abs(c) > 0)]


def _grad_norm(phi: SpectralField, order: int) -> float:
    return float(np.sqrt(np.sum(np.abs(phi.coeffs) ** 2 * order_weight(phi.freqs(), order))))


@dataclass
class PropertyReport:
    name: str
    checks: list
    meta: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c["passed"] for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({"suite": self.name, "passed": self.passed, "checks": self.checks,
                           "meta": self.meta}, indent=1, sort_keys=True)


def _check(name, value, threshold, op="<=", **extra):
    if value is None:
        ok = False
    else:
        ok = value <= threshold if op == "<=" else value >= threshold
    out = {"name": name, "value": value, "threshold": threshold, "op": op, "passed": bool(ok)}
    out.update(extra)
    return out


def run_smoothing_suite(seed: int = 0, configs=((1, 2), (2, 2)), eps=(1 / 8, 1 / 16, 1 / 32, 1 / 64),
                        samples: int = 50, cutoff: int | None = None, decay: float | None = None) -> PropertyReport:
    """Steklov smoothing inequalities on random fields.

    Each (d, m) configuration draws ``samples`` field pairs.  The fields are
    broad-spectrum (amplitudes ~ (1+|k|)^-decay up to ``cutoff``): band-limited
    fields below K/2 would make every oscillating pairing vanish identically.
    The default decay puts the fields just inside H^1.5; the field used for the
    second-order defect needs two derivatives and decays 1.5 orders faster.
    Bounds with explicit constants are checked directly; the others through the
    fitted log-log slope of the worst normalized ratio over all samples.
    """
    rng = np.random.default_rng(seed)
    Ks = [int(round(1 / e)) for e in eps]
    checks = []
    meta = {"seed": seed, "samples": samples, "eps": list(eps), "configs": [list(c) for c in configs]}
    for d, m in configs:
        cut = cutoff or (2 * max(Ks) if d == 1 else max(Ks) + 8)
        dec = decay if decay is not None else d / 2 + 1.5
        tag = f"d={d},m={m}"
        worst = {key: np.zeros(len(Ks)) for key in ("contraction", "first_defect", "multiplier", "form_l2", "second_defect", "negative_norm", "form_h1", "orthogonal_pair", "mean_pair")}
        defect_ratio = np.zeros((samples, len(Ks)))
        comm = 0.0
        for s in range(samples):
            phi = random_field(rng, d, cut, decay=dec, real=bool(s % 2))
            psi = random_field(rng, d, cut, decay=dec, real=bool(s % 2))
            smooth = random_field(rng, d, cut, decay=dec + 1.5, real=bool(s % 2))  # H^2 with margin for the second-order defect
            b = random_field(rng, d, 2, mean_zero=True, real=False)
            al = random_field(rng, d, 2, real=False)
            be = random_field(rng, d, 2, real=False)
            be = be - al * (np.vdot(al.coeffs, be.coeffs) / np.vdot(al.coeffs, al.coeffs))
            be = be / be.l2()
            pn, sn = phi.l2(), psi.l2()
            g1p, g1s, g2p = _grad_norm(phi, 1), _grad_norm(psi, 1), _grad_norm(smooth, 2)
            bn, an, ben = b.l2(), al.l2(), be.l2()
            ab = np.vdot(al.coeffs, be.coeffs)
            for i, K in enumerate(Ks):
                e = 1.0 / K
                sp = phi.steklov(e)
                diff = sp - phi
                worst["contraction"][i] = max(worst["contraction"][i], sp.l2() / pn)
                worst["first_defect"][i] = max(worst["first_defect"][i], diff.l2() / (e * g1p))
                d5 = (smooth.steklov(e) - smooth).l2()
                worst["second_defect"][i] = max(worst["second_defect"][i], d5 / g2p)
                defect_ratio[s, i] = d5 / (e ** 2 * g2p)
                worst["negative_norm"][i] = max(worst["negative_norm"][i], diff.norms(m)["h_negative"] / pn)
                mult = np.sqrt(abs(oscillating_pair(b, phi, b, phi, K))) / (bn * pn)
                worst["multiplier"][i] = max(worst["multiplier"][i], mult)
                form = abs(oscillating_form(b, phi, psi, K))
                worst["form_l2"][i] = max(worst["form_l2"][i], form / (bn * pn * g1s))
                worst["form_h1"][i] = max(worst["form_h1"][i], form / (bn * g1p * g1s))
                pair = oscillating_pair(al, phi, be, psi, K)
                worst["orthogonal_pair"][i] = max(worst["orthogonal_pair"][i], abs(pair) / (an * ben * g1p * g1s))
                al2 = al + be * 0.5  # non-orthogonal pair for the mean-value statement
                pair2 = oscillating_pair(al2, phi, be, psi, K)
                mean = np.vdot(al2.coeffs, be.coeffs) * np.vdot(phi.coeffs, psi.coeffs)
                worst["mean_pair"][i] = max(worst["mean_pair"][i], abs(pair2 - mean) / (al2.l2() * ben * pn * g1s))
                alpha = tuple([1] + [0] * (d - 1))
                comm = max(comm, float(np.max(np.abs(phi.derivative(alpha).steklov(e).coeffs
                                                      - phi.steklov(e).derivative(alpha).coeffs))))
        checks.append(_check(f"{tag} contraction ||S phi||/||phi||", float(worst["contraction"].max()), 1.0 + 1e-12))
        checks.append(_check(f"{tag} first-order defect ||S phi - phi||/(eps ||grad phi||)",
                             float(worst["first_defect"].max()),
                             np.sqrt(d) / 2 * (1 + 1e-12)))
        checks.append(_check(f"{tag} multiplier ||b^eps S phi||/(<|b|^2>^1/2 ||phi||)",
                             float(worst["multiplier"].max()), 1.0 + 1e-10))
        growth = float(np.max(defect_ratio[:, 1:] / defect_ratio[:, :-1]))
        checks.append(_check(f"{tag} second-order defect ratio growth under eps halving", growth, 2.2))
        checks.append(_check(f"{tag} commutation S D = D S", comm, 1e-12))
        for key, order in (("second_defect", 2), ("negative_norm", 2), ("form_l2", 1), ("form_h1", 2),
                           ("orthogonal_pair", 2), ("mean_pair", 1)):
            vals = worst[key]
            if np.all(vals > 0):
                fit = fit_slope(zip(eps, vals))
                checks.append(_check(f"{tag} {key} slope", fit["slope"], order - 0.25, ">=",
                                     worst=vals.tolist(), fit=fit))
            else:
                checks.append(_check(f"{tag} {key} slope", None, order - 0.25, ">=",
                                     worst=vals.tolist()))
        meta[tag] = {"cutoff": cut, "decay": dec}
    return PropertyReport("smoothing", checks, meta)


# ----------------------------------------------------------------------
# structure suite

def run_structure_suite(cell, K: int = 8, Phi: SpectralField | None = None,
                        all_potentials: bool = True) -> PropertyReport:
    """Mean-zero, divergence, potential, commutation and cancellation checks on solved cell data."""
    A = cell.A
    b = A.basis
    d, tol = A.d, cell.tol
    checks = []
    N_scale = cellmod.flux_scale(A, cell.N)
    fields = {"N": cell.N, "g": cell.g, "Nstar": cell.Nstar, "gstar": cell.gstar}
    worst_mean = max(float(np.max(np.abs(v.mean()), initial=0.0)) for v in fields.values() if v is not None)
    checks.append(_check("mean zero (N, N*, g, g*)", worst_mean, 0.0))
    div = cellmod.divergence_residual(cell.g, b, N_scale) if N_scale > 0 else 0.0
    checks.append(_check("divergence of g (relative to flux)", div, 1e-9))
    if cell.gstar is not None:
        Ast = A.adjoint()
        s = cellmod.flux_scale(Ast, cell.Nstar)
        divs = cellmod.divergence_residual(cell.gstar, b, s) if s > 0 else 0.0
        checks.append(_check("divergence of g* (relative to flux)", divs, 1e-9))
    comm = float(np.max(np.abs(cell.effective_star - cellmod.adjoint_tensor(cell.effective)), initial=0.0))
    checks.append(_check("adjoint commutation |hom(A*) - hom(A)*|", comm, 1e-8))
    pos = cellmod.check_symbol_positivity(cell.effective, b, A.lambda0)
    checks.append(_check("effective symbol positivity ratio", pos, A.lambda0 * (1 - 1e-8), ">="))
    energy = corrector_energy_margin(cell)
    checks.append(_check("corrector energy Re(AN,N) - lambda0 |N|^2 (relative)", energy, -1e-10, ">="))
    checks.append(_check("corrector norms finite", float(np.max(cell.corrector_norms())), np.inf, "<="))

    try:
        pots = cell_potentials(cell)
    except PotentialError as exc:
        checks.append(_check("potential preconditions", exc.violation, 1e-10))
        return PropertyReport("structure", checks)
    skew = max(p.skew_residual() for p in pots.values())
    checks.append(_check("potential skew symmetry (exact)", skew, 0.0))
    rep = 0.0
    for (k, ib), p in pots.items():
        gk = cell.g.with_coeffs(cell.g.coeffs[k, :, ib])
        diff = p.divergence() - gk
        rep = max(rep, float(np.max(np.abs(diff.coeffs), initial=0.0)) / (N_scale or 1.0))
    checks.append(_check("potential representation (relative to flux)", rep, 1e-9))
    if d == 1:
        # the single flux component is constant in one dimension
        gmax = float(np.max(np.abs(cell.g.coeffs), initial=0.0))
        Gmax = max(float(np.max(np.abs(p.G.coeffs), initial=0.0)) for p in pots.values())
        checks.append(_check("one-dimensional flux: max |g|, |G| (relative to flux)",
                             max(gmax, Gmax) / (N_scale or 1.0), 1e-10))
    ratios = [p.ratio for p in pots.values()]
    checks.append(_check("potential H^m ratio finite", float(max(ratios)), np.inf, "<="))
    Phi = SpectralField.mode((1,) * d, d) if Phi is None else Phi
    items = list(pots.items()) if all_potentials else list(pots.items())[:1]
    worst = {"representation": 0.0, "divergence": 0.0, "annihilation": 0.0}
    for (k, ib), p in items:
        gk = cell.g.with_coeffs(cell.g.coeffs[k, :, ib])
        ident = verify_two_scale_identities(p, Phi, K, g=gk, scale=N_scale)
        for key in worst:
            worst[key] = max(worst[key], getattr(ident, key))
    for key, val in worst.items():
        checks.append(_check(f"two-scale identity: {key}", val, 1e-10))

    if cell.has_adjoint:
        M = assemble_M(b_coefficients(cell))
        rel = M.relative_size(symbol_table(d))
        checks.append(_check("tau relative size (recorded)", rel, np.inf, "<="))
        if is_symmetric_scalar(A):
            dn = float(np.max(np.abs(cell.N.coeffs - cell.Nstar.coeffs)))
            dg = float(np.max(np.abs(cell.g.coeffs - cell.gstar.coeffs)))
            checks.append(_check("symmetric scalar: N* = N", dn, 10 * tol))
            checks.append(_check("symmetric scalar: g* = g", dg, 10 * tol))
            checks.append(_check("symmetric scalar: tau vanishes", rel, 1e-8))
    return PropertyReport("structure", checks, {"coefficients": A.name, "params": A.params, "cutoff": cell.cutoff})


def corrector_energy_margin(cell) -> float:
    """min over correctors of (Re(grad^m N, A grad^m N) - lambda0 ||grad^m N||^2) / ||grad^m N||^2."""
    A = cell.A
    op = FormOperator(A, cell.N.cutoff)
    N = cell.N.coeffs
    AN = op.apply(N)
    q = cell.N.freqs()
    w = order_weight(q, A.m)
    axes = tuple(range(2, N.ndim))
    form = np.real(np.sum(np.conj(N) * AN, axis=axes))
    nrm = np.sum(np.abs(N) ** 2 * w, axis=axes)
    mask = nrm > 0
    if not np.any(mask):
        return 0.0
    return float(np.min((form[mask] - A.lambda0 * nrm[mask]) / nrm[mask]))
