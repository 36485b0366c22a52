"""Homogenized and fine resolvents on the big torus, two-scale approximations and K1.

Macroscopic fields (right-hand sides f, homogenized solutions u, K1 f) are
plain :class:`SpectralField` objects on the unit torus.  Fine fields are
:class:`CosetField` objects, with eps = 1/K.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cell import CellData, flux_scale, tensor_symbol
from .coefficients import CoefficientArray
from .galerkin import FormOperator, SolveInfo, krylov_solve
from .multiindex import IndexBasis, leibniz_constant, lt
from .spectral import SpectralField, multiply, symbol_power
from .torus import CosetField, residue

DEFAULT_TOL = 1e-10


class ResolventError(RuntimeError):
    pass


# ----------------------------------------------------------------------
# homogenized operator

class HomogenizedOperator:
    """Constant-coefficient operator with symbol sigma(k) = (2 pi)^{2m} sum k^{alpha+beta} A-hat_{alpha beta}."""

    def __init__(self, effective: np.ndarray, basis: IndexBasis):
        self.effective = np.asarray(effective, dtype=complex)
        self.basis = basis

    @classmethod
    def from_cell(cls, cell: CellData) -> "HomogenizedOperator":
        return cls(cell.effective, cell.basis)

    def adjoint(self) -> "HomogenizedOperator":
        return HomogenizedOperator(np.conj(np.transpose(self.effective, (1, 0, 3, 2))), self.basis)

    def symbol(self, q: np.ndarray) -> np.ndarray:
        """sigma at frequencies q of shape (d, ...); returns (..., n, n)."""
        return tensor_symbol(self.effective, self.basis, np.asarray(q, dtype=float))

    def resolvent_blocks(self, q: np.ndarray) -> np.ndarray:
        sig = self.symbol(q) + np.eye(self.basis.n)
        herm = 0.5 * (sig + np.conj(np.swapaxes(sig, -1, -2)))
        low = np.linalg.eigvalsh(herm).min(initial=np.inf)
        if not low > 0:
            raise ResolventError(f"sigma + I has non-positive Hermitian part ({low:.3e})")
        return sig

    def solve(self, f: SpectralField) -> SpectralField:
        """u-hat(k) = (sigma(k) + I)^{-1} f-hat(k); f has component axis (n,)."""
        return _blockwise(f, np.linalg.inv(self.resolvent_blocks(f.freqs())))


def _blockwise(f: SpectralField, blocks: np.ndarray) -> SpectralField:
    # blocks: lattice + (n, n); f coeffs: (n, lattice)
    v = np.moveaxis(f.coeffs, 0, -1)[..., None]
    return f.with_coeffs(np.moveaxis((blocks @ v)[..., 0], -1, 0))


@dataclass(frozen=True)
class HomogenizedSolution:
    u: SpectralField
    elliptic_ratio: float


def solve_homogenized(op: HomogenizedOperator, f: SpectralField) -> HomogenizedSolution:
    """Homogenized resolvent and the ratio ||u||_{H^{2m}} / ||f||."""
    u = op.solve(f)
    fn = f.l2()
    ratio = u.norms(2 * op.basis.m)["hm"] / fn if fn > 0 else 0.0
    return HomogenizedSolution(u, ratio)


# ----------------------------------------------------------------------
# fine problem

def default_cell_cutoff(A: CoefficientArray, f: SpectralField) -> int:
    return 4 * A.band + f.cutoff + 2


@dataclass
class FineProblem:
    """(L_eps + I) u = f on the unit torus with eps = 1/K; J is the per-coset cutoff."""

    A: CoefficientArray
    K: int
    f: SpectralField
    J: int | None = None

    def __post_init__(self):
        self.K = int(self.K)
        if self.K < 1:
            raise ValueError("K must be a positive integer")
        if self.J is None:
            self.J = default_cell_cutoff(self.A, self.f)
        if self.f.comp_shape != (self.A.n,):
            raise ValueError(f"f must have {self.A.n} components")
        if self.J < 2 * self.A.band:
            raise ValueError(f"coset cutoff {self.J} does not resolve coefficient band {self.A.band}")

    @property
    def eps(self) -> float:
        return 1.0 / self.K

    def rhs(self) -> CosetField:
        return CosetField.from_field(self.f, self.K, self.J)


@dataclass(frozen=True)
class FineSolution:
    u: CosetField
    residual: float
    iterations: int
    energy_ratio: float

    @property
    def energy_ok(self) -> bool:
        return self.energy_ratio <= 1.0 + 1e-6


def solve_fine(p: FineProblem, tol: float = DEFAULT_TOL, max_iter: int = 500) -> FineSolution:
    """Galerkin solve coset by coset; also checks ||u||_{H^m} min(1, lambda0) <= ||f||_{H^-m}."""
    F = p.rhs()
    out = np.zeros(F.coeffs.shape, dtype=complex)
    worst, iters = 0.0, 0
    for i, s in enumerate(F.shifts):
        op = FormOperator(p.A, p.J, shift=s, scale=p.K, mass=1.0)
        x, info = krylov_solve(op, F.coeffs[i], tol=tol, max_iter=max_iter)
        out[i] = x
        worst, iters = max(worst, info.residual), iters + info.iterations
    u = F.with_coeffs(out)
    m = p.A.m
    fn = F.norms(m)["h_negative"]
    ratio = u.norms(m)["hm"] * min(1.0, p.A.lambda0) / fn if fn > 0 else 0.0
    return FineSolution(u, worst, iters, ratio)


def fine_solve_adjoint(p: FineProblem, h: SpectralField, tol: float = DEFAULT_TOL) -> FineSolution:
    return solve_fine(FineProblem(p.A.adjoint(), p.K, h, p.J), tol)


def duality_gap(p: FineProblem, h: SpectralField, tol: float = DEFAULT_TOL) -> float:
    """|(h, (L+I)^{-1} f) - ((L*+I)^{-1} h, f)| relative to ||h|| ||u||."""
    u = solve_fine(p, tol).u
    v = fine_solve_adjoint(p, h, tol).u
    H = CosetField.from_field(h, p.K, p.J)
    Fc = p.rhs()
    lhs = H.inner(u)
    rhs = v.inner(Fc)
    scale = H.l2() * u.l2() + v.l2() * Fc.l2()
    return abs(lhs - rhs) / scale if scale > 0 else 0.0


# ----------------------------------------------------------------------
# two-scale approximations

def _oscillating(cell: CellData, u: SpectralField, K: int, J: int, smooth: bool = True) -> CosetField:
    """sum_{k, gamma} N^k_gamma(K x) (S^eps) D^gamma u_k as a coset field."""
    b = cell.basis
    d = b.d
    N = cell.N.coeffs  # (k, gamma, i, cell lattice)
    Nc = cell.N.cutoff
    eps = 1.0 / K
    q = u.freqs().reshape(d, -1).T
    uc = u.coeffs.reshape(b.n, -1)
    blocks = {}
    for idx in np.flatnonzero(np.any(np.abs(uc) > 0, axis=0)):
        s = q[idx]
        r = residue(s, K)
        js = (s - np.array(r)) // K
        if Nc + np.max(np.abs(js), initial=0) > J:
            raise ResolventError(f"corrector band {Nc} (shifted by {js.tolist()}) overflows coset cutoff {J}")
        sv = s.reshape(d, 1).astype(float)
        damp = float(np.prod(np.sinc(eps * s))) if smooth else 1.0
        c = np.array([[symbol_power(sv, g)[0] for g in b] for _ in range(b.n)]) * uc[:, idx][:, None] * damp
        V = np.einsum("kg,kgi...->i...", c, N)
        block = blocks.setdefault(r, np.zeros((b.n,) + (2 * J + 1,) * d, dtype=complex))
        sl = tuple(slice(J + j - Nc, J + j + Nc + 1) for j in js)
        block[(slice(None),) + sl] += V
    shifts = sorted(blocks)
    arr = np.stack([blocks[s] for s in shifts]) if shifts else np.zeros((0, b.n) + (2 * J + 1,) * d)
    return CosetField(shifts, arr, K, d)


def first_order_approx(cell: CellData, u: SpectralField, K: int, J: int) -> CosetField:
    """u-tilde = S^eps u + eps^m sum N^k_gamma(x/eps) S^eps D^gamma u_k."""
    eps = 1.0 / K
    w = CosetField.from_field(u.steklov(eps), K, J)
    return w + _oscillating(cell, u, K, J, smooth=True) * eps ** cell.basis.m


@dataclass(frozen=True)
class CorrectorResult:
    Kf: CosetField
    hm_ratio: float   # ||eps^m K_eps f||_{H^m} / ||f||
    l2_ratio: float   # ||K_eps f|| / ||f||


def corrector_operator(cell: CellData, f: SpectralField, op: HomogenizedOperator, K: int, J: int) -> CorrectorResult:
    """K_eps f = sum N^k_gamma(x/eps) S^eps D^gamma u_k with u the homogenized resolvent of f."""
    u = op.solve(f)
    Kf = _oscillating(cell, u, K, J, smooth=True)
    fn = f.l2()
    m = cell.basis.m
    if fn == 0:
        return CorrectorResult(Kf, 0.0, 0.0)
    return CorrectorResult(Kf, (Kf * (1.0 / K) ** m).norms(m)["hm"] / fn, Kf.l2() / fn)


@dataclass(frozen=True)
class ResidualReport:
    F_h_negative: float
    steklov_defect: float
    f_l2: float


def residual_check(A: CoefficientArray, approx: CosetField, f: SpectralField) -> ResidualReport:
    """||(L_eps + I) u-tilde - f||_{H^-m} evaluated exactly, and ||S^eps f - f||_{H^-m}."""
    K, J = approx.K, approx.J
    Jo = J + A.band
    Fc = CosetField.from_field(f, K, Jo)
    shifts = sorted(set(approx.shifts) | set(Fc.shifts))
    approx = approx.expand(shifts)
    Fc = Fc.expand(shifts)
    out = np.zeros(Fc.coeffs.shape, dtype=complex)
    for i, s in enumerate(shifts):
        op = FormOperator(A, J, shift=s, scale=K, mass=1.0, J_out=Jo)
        out[i] = op.apply(approx.coeffs[i]) - Fc.coeffs[i]
    m = A.m
    F = Fc.with_coeffs(out)
    defect = (f.steklov(1.0 / K) - f).norms(m)["h_negative"]
    return ResidualReport(F.norms(m)["h_negative"], defect, f.l2())


def generalized_gradient(A, w, K: int = 1):
    """Gamma_alpha = sum_beta A_{alpha beta} D^beta w, components (alpha, j).

    ``A`` is a CoefficientArray (fine, A(Kx)) or a constant tensor (alpha, beta, j, k)
    paired with its basis as ``(tensor, basis)``; ``w`` is a SpectralField or CosetField.
    """
    if isinstance(A, tuple):
        T, basis = A
        grads = np.stack([w.derivative(b).coeffs for b in basis])  # (beta, [S], k, lattice)
        if isinstance(w, CosetField):
            grads = np.moveaxis(grads, 1, 0)
            return w.with_coeffs(np.einsum("abjk,sbk...->saj...", T, grads))
        return w.with_coeffs(np.einsum("abjk,bk...->aj...", T, grads))
    if isinstance(w, CosetField):
        out = []
        for i, s in enumerate(w.shifts):
            op = FormOperator(A, w.J, shift=s, scale=w.K, J_out=w.J + A.band)
            out.append(op.flux(w.coeffs[i]))
        return CosetField(w.shifts, np.stack(out), w.K, w.d)
    # full-grid variant
    Ar = A.entries.rescale(K)
    grads = SpectralField(np.stack([w.derivative(b).coeffs for b in A.basis]), w.d)  # (beta, k)
    cut = Ar.cutoff + w.cutoff
    prod = multiply(Ar, grads.with_coeffs(grads.coeffs[None, :, None]), cut)  # (alpha, beta, j, k)
    return prod.with_coeffs(prod.coeffs.sum(axis=(1, 3)))


# ----------------------------------------------------------------------
# second-order machinery

@dataclass(frozen=True)
class BTensor:
    """b^{jk}_{alpha beta gamma mu}, array axes (j, k, alpha, beta, gamma, mu).

    ``scale`` is a cancellation-free size for b: the Cauchy-Schwarz bound of its
    inner products with g replaced by the full cell flux.  It stays O(1) when g
    (and hence b) is at round-off level, so ratios against it are meaningful.
    """

    basis: IndexBasis
    mu_basis: IndexBasis
    b: np.ndarray
    scale: float = 0.0

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.b), initial=0.0))

    def matrix(self, alpha, beta, gamma, mu) -> np.ndarray:
        B, M = self.basis, self.mu_basis
        return self.b[:, :, B.position(alpha), B.position(beta), B.position(gamma), M.position(mu)]


def _flat(arr, d):
    return arr.reshape(arr.shape[: arr.ndim - d] + (-1,))


def b_coefficients(cell: CellData, swapped: bool = False) -> BTensor:
    """b = c_{alpha,mu} (D^mu N*^j_gamma, g^k_{alpha beta}) - c_{alpha,mu} (g*^j_{alpha gamma}, D^mu N^k_beta).

    With ``swapped`` the inner products are taken with arguments exchanged,
    which must produce the complex conjugate.
    """
    if not cell.has_adjoint or cell.g is None or cell.gstar is None:
        raise ValueError("b coefficients need the adjoint cell data (use solve_all)")
    b = cell.basis
    m, d, n = b.m, b.d, b.n
    mus = IndexBasis(m - 1, d, n)
    c = max(cell.N.cutoff, cell.g.cutoff)
    q = SpectralField.zeros(d, c).freqs()
    pm = np.stack([symbol_power(q, mu) for mu in mus])
    N, Ns = cell.N.resize(c).coeffs, cell.Nstar.resize(c).coeffs
    g, gs = cell.g.resize(c).coeffs, cell.gstar.resize(c).coeffs
    sh = (slice(None),) + (None,) * 3
    DNs = _flat(pm[sh] * Ns[None], d)  # (mu, j, gamma, i, L)
    DN = _flat(pm[sh] * N[None], d)    # (mu, k, beta, i, L)
    g, gs = _flat(g, d), _flat(gs, d)
    if swapped:
        t1 = np.conj(np.einsum("kabil,ujcil->jkabcu", np.conj(g), DNs))
        t2 = np.conj(np.einsum("ukbil,jacil->jkabcu", np.conj(DN), gs))
    else:
        t1 = np.einsum("ujcil,kabil->jkabcu", np.conj(DNs), g)
        t2 = np.einsum("jacil,ukbil->jkabcu", np.conj(gs), DN)
    out = np.zeros((n, n, b.mbar, b.mbar, b.mbar, mus.mbar), dtype=complex)
    for ia, alpha in enumerate(b):
        for iu, mu in enumerate(mus):
            if lt(mu, alpha):
                cst = leibniz_constant(alpha, mu)
                out[:, :, ia, :, :, iu] = cst * (t1[:, :, ia, :, :, iu] - t2[:, :, ia, :, :, iu])
    if swapped:
        out = np.conj(out)
    # reference size: c_{alpha,mu} (max ||D^mu N*|| F + max ||D^mu N|| F*), F the total flux norms
    nrm = lambda arr: float(np.sqrt(np.max(np.sum(np.abs(arr) ** 2, axis=(-2, -1)), initial=0.0)))
    F, Fs = flux_scale(cell.A, cell.N), flux_scale(cell.A.adjoint(), cell.Nstar)
    scale = 0.0
    for alpha in b:
        for iu, mu in enumerate(mus):
            if lt(mu, alpha):
                cst = leibniz_constant(alpha, mu)
                scale = max(scale, cst * (nrm(DNs[iu]) * F + nrm(DN[iu]) * Fs))
    return BTensor(b, mus, out, scale)


class MOperator:
    """Constant operator of order 2m+1 with symbol tau(k) = (-1)^m sum B (2 pi i k)^{alpha+beta+gamma-mu}."""

    def __init__(self, bt: BTensor):
        self.bt = bt
        b, mus = bt.basis, bt.mu_basis
        self.m, self.n = b.m, b.n
        terms: dict = {}
        for ia, alpha in enumerate(b):
            for iu, mu in enumerate(mus):
                if not lt(mu, alpha):
                    continue
                for ib, beta in enumerate(b):
                    for ic, gamma in enumerate(b):
                        e = alpha + beta + gamma - mu
                        mat = bt.b[:, :, ia, ib, ic, iu]
                        terms.setdefault(e, []).append(mat)
        self.terms = {e: np.sum(ms, axis=0) for e, ms in terms.items()}
        self.counts = {e: len(ms) for e, ms in terms.items()}

    def symbol(self, q: np.ndarray) -> np.ndarray:
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[1:] + (self.n, self.n), dtype=complex)
        for e, mat in self.terms.items():
            out = out + symbol_power(q, e)[..., None, None] * mat
        return (-1) ** self.m * out

    def reference(self, q: np.ndarray) -> np.ndarray:
        """Size of tau without cancellation: b-scale times sum |p_{alpha+beta+gamma-mu}(q)|."""
        q = np.asarray(q, dtype=float)
        out = np.zeros(q.shape[1:])
        for e, cnt in self.counts.items():
            out = out + cnt * np.abs(symbol_power(q, e))
        return out * self.bt.scale

    def relative_size(self, q: np.ndarray) -> float:
        """max ||tau(q)|| / max reference(q) over the given frequencies."""
        ref = float(np.max(self.reference(q), initial=0.0))
        if ref == 0:
            return 0.0
        tau = np.linalg.norm(self.symbol(q), ord=2, axis=(-2, -1))
        return float(np.max(tau, initial=0.0)) / ref


def assemble_M(bt: BTensor) -> MOperator:
    return MOperator(bt)


def apply_K1(op: HomogenizedOperator, M: MOperator, f: SpectralField) -> SpectralField:
    """K1 f = (sigma + I)^{-1} tau (sigma + I)^{-1} f-hat per frequency."""
    q = f.freqs()
    R = np.linalg.inv(op.resolvent_blocks(q))
    return _blockwise(f, R @ M.symbol(q) @ R)


def symbol_table(d: int, radius: int = 3) -> np.ndarray:
    """All nonzero integer frequencies with |k_i| <= radius, shape (d, count)."""
    q = SpectralField.zeros(d, radius).freqs().reshape(d, -1)
    return q[:, np.any(q != 0, axis=0)]
