"""Skew-symmetric flux potentials and the two-scale identities they satisfy.

Given a mean-zero array g_alpha (|alpha| = m) with sum_alpha D^alpha g_alpha = 0,
the potential is built frequency by frequency:

    G_{gamma alpha}(k) = (conj(p_gamma) g_alpha - conj(p_alpha) g_gamma) / S(k),

with p_gamma(k) = (2 pi i k)^gamma and S(k) = sum_gamma |p_gamma(k)|^2.  Then
sum_gamma D^gamma G_{gamma alpha} = g_alpha and G_{alpha gamma} = -G_{gamma alpha}.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .cell import CellData, flux_scale
from .multiindex import IndexBasis, leibniz_constant, sub_indices
from .spectral import SpectralField, multiply, order_weight, symbol_power

DIVERGENCE_TOL = 1e-10


class PotentialError(ValueError):
    """The flux array violates the mean-zero or divergence-free precondition."""

    def __init__(self, message, violation):
        super().__init__(f"{message} (measured {violation:.3e})")
        self.violation = violation


def _symbols(basis: IndexBasis, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    p = np.stack([symbol_power(q, a) for a in basis])
    return p, order_weight(q, basis.m)


def _expand(arr, ndim_mid):
    # (a, lattice) -> (a, 1 * ndim_mid, lattice)
    return arr.reshape(arr.shape[:1] + (1,) * ndim_mid + arr.shape[1:])


def flux_violations(g: SpectralField, basis: IndexBasis, scale: float | None = None) -> tuple[float, float]:
    """(mean violation, worst per-frequency divergence) of g with alpha on component axis 0."""
    p, S = _symbols(basis, g.freqs())
    c = g.coeffs
    scale = g.l2() if scale is None else scale
    if scale == 0:
        return 0.0, 0.0
    div = np.sum(_expand(p, c.ndim - 1 - g.d) * c, axis=0)
    S_safe = np.where(S > 0, np.sqrt(S), 1.0)
    mean = float(np.max(np.abs(g.mean()), initial=0.0)) / scale
    return mean, float(np.max(np.abs(div) / S_safe, initial=0.0)) / scale


@dataclass(frozen=True)
class PotentialMatrix:
    """G_{gamma alpha} stored with component axes (gamma, alpha, *rest)."""

    basis: IndexBasis
    G: SpectralField
    source_hash: str
    ratio: float = float("nan")
    violations: tuple = (0.0, 0.0)
    meta: dict = field(default_factory=dict)

    def entry(self, gamma, alpha) -> SpectralField:
        b = self.basis
        return self.G[b.position(gamma), b.position(alpha)]

    def skew_residual(self) -> float:
        c = self.G.coeffs
        return float(np.max(np.abs(c + np.swapaxes(c, 0, 1)), initial=0.0))

    def divergence(self) -> SpectralField:
        """sum_gamma D^gamma G_{gamma alpha}, component axes (alpha, *rest)."""
        p, _ = _symbols(self.basis, self.G.freqs())
        c = self.G.coeffs
        return self.G.with_coeffs(np.sum(_expand(p, c.ndim - 1 - self.G.d) * c, axis=0))

    def representation_residual(self, g: SpectralField) -> float:
        """Worst per-frequency |sum_gamma D^gamma G_{gamma alpha} - g_alpha| relative to ||g||."""
        scale = g.l2()
        if scale == 0:
            return float(np.max(np.abs(self.divergence().coeffs), initial=0.0))
        diff = self.divergence() - g
        return float(np.max(np.abs(diff.coeffs), initial=0.0)) / scale


def field_hash(g: SpectralField) -> str:
    return hashlib.sha256(g.to_bytes()).hexdigest()[:16]


def build_potential(g: SpectralField, basis: IndexBasis, tol: float = DIVERGENCE_TOL,
                    scale: float | None = None) -> PotentialMatrix:
    """Potential for the flux array g (component axes (alpha, *rest)).

    ``scale`` is the reference norm for the precondition checks (defaults to
    ||g||); pass the full flux norm when g itself is at round-off level.
    """
    if g.comp_shape[:1] != (basis.mbar,):
        raise ValueError(f"flux array must have {basis.mbar} alpha components, got {g.comp_shape}")
    mean, div = flux_violations(g, basis, scale)
    if mean > tol:
        raise PotentialError("flux array has nonzero mean", mean)
    if div > tol:
        raise PotentialError("flux array is not divergence free", div)
    p, S = _symbols(basis, g.freqs())
    c = g.coeffs
    rest = c.ndim - 1 - g.d
    pc = np.conj(_expand(p, rest))
    S_inv = np.where(S > 0, 1.0 / np.where(S > 0, S, 1.0), 0.0)
    # G[gamma, alpha] = (conj p_gamma g_alpha - conj p_alpha g_gamma) / S
    G = (pc[:, None] * c[None, :] - pc[None, :] * c[:, None]) * S_inv
    Gf = SpectralField(G, g.d)
    gn = sum(g[i].l2() for i in range(basis.mbar))
    ratio = potential_hm(Gf, basis.m) / gn if gn > 0 else 0.0
    return PotentialMatrix(basis=basis, G=Gf, source_hash=field_hash(g), ratio=ratio,
                           violations=(mean, div))


def potential_hm(G: SpectralField, m: int) -> float:
    q = G.freqs()
    w = 1.0 + order_weight(q, m)
    return float(np.sqrt(np.sum(np.abs(G.coeffs) ** 2 * w)))


def cell_potentials(cell: CellData, star: bool = False, tol: float = DIVERGENCE_TOL) -> dict:
    """Componentwise potentials G^k_{gamma alpha beta}: {(k, beta): PotentialMatrix}.

    Each matrix has component axes (gamma, alpha, i).
    """
    g = cell.gstar if star else cell.g
    N = cell.Nstar if star else cell.N
    A = cell.A.adjoint() if star else cell.A
    if g is None:
        raise ValueError("cell data carry no flux remainders")
    scale = flux_scale(A, N)
    out = {}
    b = cell.basis
    for k in range(b.n):
        for ib in range(b.mbar):
            gk = g.with_coeffs(g.coeffs[k, :, ib])  # (alpha, i)
            out[(k, ib)] = build_potential(gk, b, tol=tol, scale=scale)
    return out


# ----------------------------------------------------------------------
# two-scale identities on the big torus

@dataclass(frozen=True)
class TwoScaleReport:
    representation: float
    divergence: float
    annihilation: float

    @property
    def passed(self) -> bool:
        return max(self.representation, self.divergence, self.annihilation) <= 1e-10


def _rel(diff: float, ref: float) -> float:
    return diff / ref if ref > 0 else diff


def verify_two_scale_identities(P: PotentialMatrix, Phi: SpectralField, K: int, g: SpectralField | None = None,
                                test: SpectralField | None = None, scale: float = 0.0) -> TwoScaleReport:
    """Check the oscillating-product identities for G(x/eps) with eps = 1/K.

    Representation: g_alpha(x/eps) Phi equals
        sum_gamma D^gamma(eps^m G^eps_{gamma alpha} Phi)
        - sum_gamma sum_{mu < gamma} eps^{m-|mu|} c_{gamma,mu} (D^mu G_{gamma alpha})^eps D^{gamma-mu} Phi.
    Divergence: sum_alpha D^alpha sum_gamma D^gamma(G^eps_{gamma alpha} Phi) = 0.
    Annihilation: sum_{gamma alpha} (D^gamma D^alpha phi, G^eps_{gamma alpha} Phi) = 0 for a test field phi.
    ``g`` defaults to the divergence of G; ``test`` to a fixed smooth field.
    All residuals are relative to the size of the largest contributing term;
    ``scale`` (a flux size, times ||Phi||) is a floor for the representation
    reference so that a flux at round-off level is not compared with itself.
    """
    b = P.basis
    m, d = b.m, b.d
    eps = 1.0 / K
    if Phi.comp_shape:
        raise ValueError("Phi must be a scalar field")
    g = P.divergence() if g is None else g
    full = K * P.G.cutoff + Phi.cutoff
    Gc = P.G.coeffs
    rest = Gc.ndim - 2 - d

    def osc(field):  # F(y) -> F(K x) times Phi, exact product
        return multiply(field.rescale(K), Phi, full)

    rep_res, rep_ref = 0.0, 0.0
    for ia, alpha in enumerate(b):
        lhs = osc(g[ia])
        rhs = SpectralField.zeros(d, full, lhs.comp_shape)
        for ic, gamma in enumerate(b):
            Gga = P.G[ic, ia]
            rhs = rhs + osc(Gga).derivative(gamma) * eps ** m
            for mu in sub_indices(gamma, strict=True):
                c = leibniz_constant(gamma, mu)
                term = multiply(Gga.derivative(mu).rescale(K), Phi.derivative(gamma - mu), full)
                rhs = rhs - term * (c * eps ** (m - mu.order))
        rep_res = max(rep_res, float(np.max(np.abs((lhs - rhs).coeffs), initial=0.0)))
        rep_ref = max(rep_ref, lhs.l2(), rhs.l2())

    # M_alpha = sum_gamma D^gamma(G^eps_{gamma alpha} Phi)
    div_total = SpectralField.zeros(d, full, Gc.shape[2:2 + rest])
    div_ref = 0.0
    for ia, alpha in enumerate(b):
        for ic, gamma in enumerate(b):
            term = osc(P.G[ic, ia]).derivative(gamma).derivative(alpha)
            div_ref = max(div_ref, term.l2())
            div_total = div_total + term
    div_res = float(np.max(np.abs(div_total.coeffs), initial=0.0))

    if test is None:
        test = SpectralField.from_function(
            lambda *y: np.exp(np.sin(2 * np.pi * y[0]) + 0.5 * np.cos(2 * np.pi * sum(y))), d, 8)
    test = test.resize(full)
    ann, ann_ref = 0.0, 0.0
    for ia, alpha in enumerate(b):
        for ic, gamma in enumerate(b):
            prod = osc(P.G[ic, ia])
            dphi = test.derivative(gamma).derivative(alpha)
            val = np.sum(np.conj(dphi.coeffs) * prod.coeffs, axis=tuple(range(-d, 0)))
            ann = ann + val
            ann_ref = max(ann_ref, float(np.max(np.abs(val), initial=0.0)))
    ann = float(np.max(np.abs(ann), initial=0.0))
    rep_ref = max(rep_ref, scale * Phi.l2())
    return TwoScaleReport(representation=_rel(rep_res, rep_ref), divergence=_rel(div_res, div_ref),
                          annihilation=_rel(ann, ann_ref))
