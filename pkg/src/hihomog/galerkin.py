"""Matrix-free Fourier-Galerkin forms and the Krylov driver shared by all solves.

A :class:`FormOperator` acts on coefficient arrays P(j), |j_i| <= J, that
represent ``exp(2 pi i s.x) P(K x)``; the frequency seen by derivatives is
therefore q = s + K j.  With s = 0, K = 1 this is an ordinary cell function;
with s a macroscopic mode and K = 1/eps it is one coset of a field on the
big torus, which the eps-periodic operator never mixes with other cosets.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse.linalg as spla

from .coefficients import CoefficientArray
from .spectral import (analyze, frequencies, grid_size, order_weight, resize_coeffs, symbol_power,
                       synthesize)


class SolverError(RuntimeError):
    """Krylov iteration failed to reach the requested tolerance."""

    def __init__(self, message, residual=float("nan"), iterations=0):
        super().__init__(f"{message} (residual {residual:.3e} after {iterations} iterations)")
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True)
class SolveInfo:
    residual: float
    iterations: int


def lattice_frequencies(J: int, d: int, shift=None, scale: int = 1) -> np.ndarray:
    q = frequencies(J, d).astype(float) * scale
    if shift is not None:
        q = q + np.asarray(shift, dtype=float).reshape((d,) + (1,) * d)
    return q


class FormOperator:
    """P -> sum_{alpha beta} conj(p_alpha) [A_{alpha beta} p_beta P]_J + mass P.

    This is the Galerkin matrix of (grad^m phi, A grad^m u) + mass (phi, u),
    i.e. the coefficient form of (-1)^m sum D^alpha(A D^beta u) + mass u.
    Products with A are formed on a grid large enough to be alias-free on the
    retained output modes.
    """

    def __init__(self, A: CoefficientArray, J: int, shift=None, scale: int = 1, mass: float = 0.0,
                 exclude_zero: bool = False, J_out: int | None = None):
        self.A = A
        self.d, self.n, self.mbar = A.d, A.n, A.basis.mbar
        self.J = J
        self.J_out = J if J_out is None else J_out
        self.shift = None if shift is None else tuple(int(v) for v in shift)
        self.scale = int(scale)
        self.mass = float(mass)
        self.exclude_zero = exclude_zero
        d = self.d
        self.q_in = lattice_frequencies(J, d, shift, scale)
        self.q_out = lattice_frequencies(self.J_out, d, shift, scale)
        self.p_in = np.stack([symbol_power(self.q_in, a) for a in A.basis])
        self.p_out = np.stack([symbol_power(self.q_out, a) for a in A.basis])
        self.M = grid_size(self.J_out + A.entries.cutoff + J + 1)
        self._Ag = A.grid_values(self.M)
        self.side = 2 * J + 1
        self.shape_in = (self.n,) + (2 * J + 1,) * d
        self.shape_out = (self.n,) + (2 * self.J_out + 1,) * d
        if exclude_zero:
            if self.J_out != J:
                raise ValueError("exclude_zero requires a square operator")
            zero = np.all(self.q_in == 0, axis=0)
            self.mask = ~np.broadcast_to(zero, self.shape_in)
        else:
            self.mask = np.ones(self.shape_in, dtype=bool)
        self.ndof = int(self.mask.sum())

    def apply(self, P: np.ndarray, A_grid: np.ndarray | None = None) -> np.ndarray:
        """Apply to a coefficient array of shape (n, lattice_in) (extra leading axes allowed)."""
        Ag = self._Ag if A_grid is None else A_grid
        d = self.d
        lead = P.shape[:-(d + 1)]
        gv = synthesize(self._grads(P), d, self.M)
        F = analyze(_flux(Ag, gv, d), d, self.J_out)
        out = np.sum(np.conj(self.p_out)[:, None] * F, axis=len(lead))
        if self.mass:
            if self.J_out == self.J:
                out = out + self.mass * P
            else:
                out = out + self.mass * _embed(P, d, self.J_out)
        return out

    def flux(self, P: np.ndarray, cutoff: int | None = None) -> np.ndarray:
        """Coefficients of A grad^m P, shape lead + (mbar, n, lattice(cutoff))."""
        d = self.d
        cutoff = self.J_out if cutoff is None else cutoff
        M = grid_size(cutoff + self.A.entries.cutoff + self.J + 1)
        Ag = self._Ag if M == self.M else self.A.grid_values(M)
        return analyze(_flux(Ag, synthesize(self._grads(P), d, M), d), d, cutoff)

    def _grads(self, P):
        """p_beta P with shape lead + (mbar, n, lattice)."""
        return self.p_in[:, None] * np.expand_dims(P, P.ndim - self.d - 1)

    def mean_symbol(self) -> np.ndarray:
        """Blocks sum conj(p_alpha) <A_{alpha beta}> p_beta, shape lattice + (n, n)."""
        Am = self.A.mean()
        return np.einsum("a...,abjk,b...->...jk", np.conj(self.p_in), Am, self.p_in)

    def weights(self) -> np.ndarray:
        """Per-frequency scale (mass + sum_{|alpha|=m} |p_alpha|^2)^{1/2}."""
        return np.sqrt(self.mass + order_weight(self.q_in, self.A.m))


def _flux(Ag, gv, d):
    # Ag: (a, b, j, k, grid); gv: lead + (b, k, grid) -> lead + (a, j, grid)
    lead_nd = gv.ndim - 2 - d
    grid = "xyzw"[:d]
    lead = "pqrs"[:lead_nd]
    return np.einsum(f"abjk{grid},{lead}bk{grid}->{lead}aj{grid}", Ag, gv, optimize=True)


def _embed(P, d, J_out):
    return resize_coeffs(P, d, J_out)


def krylov_solve(op: FormOperator, rhs: np.ndarray, tol: float = 1e-10, max_iter: int = 500,
                 restart: int = 60) -> tuple[np.ndarray, SolveInfo]:
    """Solve op(x) = rhs by right-preconditioned GMRES.

    The system is diagonally scaled by the inverse per-frequency weight so
    the residual is measured in the dual (H^{-m}-type) norm, then right
    preconditioned with the mean-coefficient symbol (plus mass).  The returned
    residual is the true scaled relative residual ||W(rhs - op x)|| / ||W rhs||.
    """
    if op.J_out != op.J:
        raise ValueError("krylov_solve needs a square operator")
    mask = op.mask
    n, d = op.n, op.d
    w = np.broadcast_to(op.weights(), op.shape_in)
    w_safe = np.where(mask, w, 1.0)
    blocks = op.mean_symbol() + op.mass * np.eye(n)
    if op.exclude_zero:
        zero = np.all(op.q_in == 0, axis=0)
        blocks[zero] = np.eye(n)
    inv_blocks = np.linalg.inv(blocks)  # lattice + (n, n)

    def unpack(v):
        full = np.zeros(op.shape_in, dtype=complex)
        full[mask] = v
        return full

    def precondition(full):
        moved = np.moveaxis(full, 0, -1)[..., None]  # lattice + (n, 1)
        return np.moveaxis((inv_blocks @ moved)[..., 0], -1, 0)

    def matvec(z):
        x = precondition(unpack(z) * w_safe)
        return (op.apply(x) / w_safe)[mask]

    c = (rhs / w_safe)[mask]
    cnorm = float(np.linalg.norm(c))
    if cnorm == 0.0:
        return np.zeros(op.shape_in, dtype=complex), SolveInfo(0.0, 0)
    T = spla.LinearOperator((op.ndof, op.ndof), matvec=matvec, dtype=complex)
    restart = max(1, min(restart, op.ndof))
    count = [0]

    def cb(_):
        count[0] += 1

    z, _ = spla.gmres(T, c, rtol=tol, atol=0.0, restart=restart,
                      maxiter=max(1, math.ceil(max_iter / restart)), callback=cb, callback_type="pr_norm")
    x = precondition(unpack(z) * w_safe)
    x[~mask] = 0.0
    res = float(np.linalg.norm(((rhs - op.apply(x)) / w_safe)[mask]) / cnorm)
    info = SolveInfo(res, count[0])
    if not res <= tol * 1.0001:
        raise SolverError("GMRES did not converge", res, count[0])
    return x, info
