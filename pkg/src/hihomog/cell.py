"""Periodic cell problems, the effective tensor and flux remainders."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .coefficients import CoefficientArray, CoefficientError
from .galerkin import FormOperator, krylov_solve
from .multiindex import IndexBasis
from .spectral import SpectralField, frequencies, order_weight, symbol_power

DEFAULT_TOL = 1e-10


@dataclass
class CellData:
    """Cell-problem output for one coefficient array (and optionally its adjoint).

    Field layouts (leading component axes of each SpectralField):
      N      (k, gamma, i)          corrector N^k_gamma, component i
      g      (k, alpha, beta, i)    flux remainder g^k_{alpha beta}
      effective  ndarray (alpha, beta, j, k)
    """

    A: CoefficientArray
    cutoff: int
    tol: float
    N: SpectralField
    effective: np.ndarray
    g: SpectralField | None = None
    residuals: np.ndarray | None = None
    iterations: np.ndarray | None = None
    Nstar: SpectralField | None = None
    gstar: SpectralField | None = None
    effective_star: np.ndarray | None = None
    residuals_star: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def basis(self) -> IndexBasis:
        return self.A.basis

    def corrector(self, k: int, gamma, star: bool = False) -> SpectralField:
        src = self.Nstar if star else self.N
        return src[k, self.basis.position(gamma)]

    def flux(self, k: int, alpha, beta, star: bool = False) -> SpectralField:
        src = self.gstar if star else self.g
        b = self.basis
        return src[k, b.position(alpha), b.position(beta)]

    @property
    def has_adjoint(self) -> bool:
        return self.Nstar is not None

    def corrector_norms(self) -> np.ndarray:
        """||grad^m N^k_gamma||_Y per (k, gamma): finite for every corrector."""
        q = self.N.freqs()
        w = order_weight(q, self.basis.m)
        return np.sqrt(np.sum(np.abs(self.N.coeffs) ** 2 * w, axis=tuple(range(2, self.N.coeffs.ndim))))

    # serialization ----------------------------------------------------
    def save(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        manifest = {
            "schema": "hihomog-cell/1",
            "coefficients": self.A.to_manifest(),
            "cutoff": self.cutoff,
            "tol": self.tol,
            "effective": _encode(self.effective),
            "residuals": None if self.residuals is None else self.residuals.tolist(),
            "iterations": None if self.iterations is None else self.iterations.tolist(),
            "effective_star": None if self.effective_star is None else _encode(self.effective_star),
            "residuals_star": None if self.residuals_star is None else self.residuals_star.tolist(),
            "corrector_norms": self.corrector_norms().tolist(),
            "meta": self.meta,
            "fields": {},
        }
        for name in ("N", "g", "Nstar", "gstar"):
            fld = getattr(self, name)
            if fld is not None:
                fname = f"{name}.field"
                fld.save(out / fname)
                manifest["fields"][name] = fname
        (out / "manifest.json").write_text(json.dumps(manifest, indent=1))

    @classmethod
    def load(cls, directory) -> "CellData":
        src = Path(directory)
        man = json.loads((src / "manifest.json").read_text())
        A = CoefficientArray.from_manifest(man["coefficients"])
        fields = {k: SpectralField.load(src / v) for k, v in man["fields"].items()}
        arr = lambda key: None if man.get(key) is None else np.array(man[key])
        return cls(A=A, cutoff=man["cutoff"], tol=man["tol"], N=fields["N"],
                   effective=_decode(man["effective"]), g=fields.get("g"),
                   residuals=arr("residuals"), iterations=arr("iterations"),
                   Nstar=fields.get("Nstar"), gstar=fields.get("gstar"),
                   effective_star=None if man.get("effective_star") is None else _decode(man["effective_star"]),
                   residuals_star=arr("residuals_star"), meta=man.get("meta", {}))


def _encode(arr):
    arr = np.asarray(arr)
    return {"shape": list(arr.shape), "re": arr.real.ravel().tolist(), "im": arr.imag.ravel().tolist()}


def _decode(data):
    return (np.array(data["re"]) + 1j * np.array(data["im"])).reshape(data["shape"])


def _cell_operator(A: CoefficientArray, cutoff: int) -> FormOperator:
    return FormOperator(A, cutoff, exclude_zero=True)


def solve_correctors(A: CoefficientArray, cutoff: int, tol: float = DEFAULT_TOL,
                     max_iter: int = 500) -> CellData:
    """Mean-zero Galerkin correctors N^k_gamma for every (k, gamma).

    Weak form: (grad^m phi, A grad^m N) = -(grad^m phi, A_{. gamma} e^k) for all
    mean-zero trigonometric phi with modes up to ``cutoff``.
    """
    if cutoff < A.band:
        raise CoefficientError(f"cutoff {cutoff} below coefficient band {A.band}")
    b = A.basis
    n, mb, d = b.n, b.mbar, b.d
    op = _cell_operator(A, cutoff)
    Acoef = A.entries.resize(cutoff).coeffs  # (alpha, beta, j, k, lattice)
    N = np.zeros((n, mb, n) + (2 * cutoff + 1,) * d, dtype=complex)
    residuals = np.zeros((n, mb))
    iterations = np.zeros((n, mb), dtype=int)
    for k in range(n):
        for ig in range(mb):
            # column k of A_{alpha gamma}: field with components (alpha, j)
            col = Acoef[:, ig, :, k]
            rhs = -np.sum(np.conj(op.p_out)[:, None] * col, axis=0)
            rhs[~op.mask] = 0.0
            x, info = krylov_solve(op, rhs, tol=tol, max_iter=max_iter)
            N[k, ig] = x
            residuals[k, ig] = info.residual
            iterations[k, ig] = info.iterations
    Nf = SpectralField(N, d)
    eff = effective_tensor(A, Nf, cutoff)
    return CellData(A=A, cutoff=cutoff, tol=tol, N=Nf, effective=eff, residuals=residuals,
                    iterations=iterations)


def _total_flux(A: CoefficientArray, N: SpectralField, cutoff: int) -> np.ndarray:
    """Coefficients of sum_gamma A_{alpha gamma}(e_{gamma beta} e^k + D^gamma N^k_beta).

    Returned with axes (k, alpha, beta, j, lattice), truncated to ``cutoff``
    (the Galerkin projection of the flux).
    """
    b = A.basis
    n, mb, d = b.n, b.mbar, b.d
    op = FormOperator(A, N.cutoff, J_out=cutoff)
    # flux of the corrector: lead axes (k, beta) -> (alpha, j)
    fN = op.flux(N.coeffs, cutoff)  # (k, beta, alpha, j, lattice)
    Acoef = A.entries.resize(cutoff).coeffs  # (alpha, beta, j, k, lattice)
    # A_{alpha beta} e^k : (alpha, beta, j, k) -> (k, alpha, beta, j)
    direct = np.moveaxis(Acoef, 3, 0)
    return direct + np.swapaxes(fN, 1, 2)


def effective_tensor(A: CoefficientArray, N: SpectralField, cutoff: int | None = None) -> np.ndarray:
    """A-hat_{alpha beta} e^k = <sum_gamma A_{alpha gamma}(e_{gamma beta} e^k + D^gamma N^k_beta)>."""
    cutoff = N.cutoff if cutoff is None else cutoff
    flux = _total_flux(A, N, cutoff)
    centre = (Ellipsis,) + (cutoff,) * A.d
    mean = flux[centre]  # (k, alpha, beta, j)
    return np.transpose(mean, (1, 2, 3, 0))


def flux_remainder(A: CoefficientArray, N: SpectralField, effective: np.ndarray) -> SpectralField:
    """g^k_{alpha beta} = flux - A-hat_{alpha beta} e^k, axes (k, alpha, beta, i)."""
    cutoff = N.cutoff
    flux = _total_flux(A, N, cutoff)
    centre = (Ellipsis,) + (cutoff,) * A.d
    flux[centre] -= np.transpose(effective, (3, 0, 1, 2))
    return SpectralField(flux, A.d)


def divergence_residual(g: SpectralField, basis: IndexBasis, scale: float | None = None,
                        alpha_axis: int = 1) -> float:
    """Worst per-frequency |sum_alpha p_alpha(k) g_alpha(k)| / (|p(k)| * scale).

    p_alpha(k) = (2 pi i k)^alpha and |p(k)|^2 = sum_alpha |p_alpha(k)|^2, so each
    ratio is at most ||g(k)|| / scale by Cauchy-Schwarz.  ``alpha_axis`` locates
    the alpha component axis (1 for the (k, alpha, beta, i) flux layout);
    ``scale`` defaults to ||g||_{L2}.
    """
    q = g.freqs()
    p = np.stack([symbol_power(q, a) for a in basis])
    S = order_weight(q, basis.m)
    c = np.moveaxis(g.coeffs, alpha_axis, 0)
    p = p.reshape(p.shape[:1] + (1,) * (c.ndim - 1 - g.d) + p.shape[1:])
    div = np.sum(p * c, axis=0)
    scale = g.l2() if scale is None else scale
    if scale == 0:
        return 0.0
    S_safe = np.where(S > 0, np.sqrt(S), 1.0)
    return float(np.max(np.abs(div) / S_safe, initial=0.0) / scale)


def flux_scale(A: CoefficientArray, N: SpectralField) -> float:
    """L2 norm of the full flux sum_gamma A_{alpha gamma}(e_{gamma beta} e^k + D^gamma N^k_beta)."""
    return float(np.sqrt(np.sum(np.abs(_total_flux(A, N, N.cutoff)) ** 2)))


def solve_all(A: CoefficientArray, cutoff: int, tol: float = DEFAULT_TOL, max_iter: int = 500) -> CellData:
    """Correctors, effective tensor and flux remainders for A and for its adjoint."""
    cell = solve_correctors(A, cutoff, tol, max_iter)
    cell.g = flux_remainder(A, cell.N, cell.effective)
    Astar = A.adjoint()
    star = solve_correctors(Astar, cutoff, tol, max_iter)
    cell.Nstar = star.N
    cell.effective_star = star.effective
    cell.gstar = flux_remainder(Astar, star.N, star.effective)
    cell.residuals_star = star.residuals
    return cell


def refine_cutoff(A: CoefficientArray, tol: float = DEFAULT_TOL, start: int | None = None,
                  max_cutoff: int | None = None) -> int:
    """Smallest cutoff c (start, 2 start, ...) whose effective tensor moves by <= 10 tol when c doubles.

    ``max_cutoff`` defaults to four times the starting cutoff.
    """
    c = 4 * A.band + 2 if start is None else start
    max_cutoff = 4 * c if max_cutoff is None else max_cutoff
    prev = solve_correctors(A, c, tol).effective
    while 2 * c <= max_cutoff:
        nxt = solve_correctors(A, 2 * c, tol).effective
        if np.max(np.abs(nxt - prev)) <= 10 * tol:
            return c
        c, prev = 2 * c, nxt
    raise CoefficientError(f"effective tensor not converged below cutoff {max_cutoff}")


def adjoint_tensor(T: np.ndarray) -> np.ndarray:
    """(A-hat)*_{alpha beta}^{jk} = conj(A-hat_{beta alpha}^{kj})."""
    return np.conj(np.transpose(T, (1, 0, 3, 2)))


def tensor_symbol(T: np.ndarray, basis: IndexBasis, freq: np.ndarray) -> np.ndarray:
    """sum (2 pi)^{2m} k^{alpha+beta} T_{alpha beta} for frequencies of shape (d, ...)."""
    powers = np.stack([a.power(np.moveaxis(freq, 0, -1)) for a in basis]) * (2 * np.pi) ** basis.m
    return np.einsum("a...,abjk,b...->...jk", powers, T, powers)


def check_symbol_positivity(T: np.ndarray, basis: IndexBasis, lambda0: float, samples: int = 100,
                            rng: np.random.Generator | None = None) -> float:
    """Worst ratio Re(xi* sigma(k) xi) / ((2pi)^{2m} sum k^{2alpha} |xi|^2) over random samples."""
    rng = np.random.default_rng(0) if rng is None else rng
    d, n = basis.d, basis.n
    worst = np.inf
    for _ in range(samples):
        k = rng.standard_normal(d)
        xi = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        sig = tensor_symbol(T, basis, k.reshape(d, 1))[0]
        den = order_weight(k.reshape(d, 1) / 1.0, basis.m)[0] * np.vdot(xi, xi).real
        worst = min(worst, float(np.real(np.vdot(xi, sig @ xi)) / den))
    return worst
