"""Fields on the big torus stored coset by coset.

With eps = 1/K every eps-periodic operator maps the frequency coset
r + K Z^d to itself, so a field is kept as

    u(x) = sum_r exp(2 pi i r.x) P_r(K x),   P_r(y) = sum_j c_r(j) exp(2 pi i j.y),

i.e. coefficient c_r(j) sits at frequency q = r + K j.  The residues r are
representatives in [-(K-1)//2, K - 1 - (K-1)//2]^d; only the residues that
carry data are stored.  Norms and inner products are exact Parseval sums.
"""
from __future__ import annotations

import numpy as np

from .galerkin import lattice_frequencies
from .spectral import SpectralField, order_weight, resize_coeffs, symbol_power


def residue(s, K: int) -> tuple:
    lo = (K - 1) // 2
    return tuple(int((v + lo) % K - lo) for v in s)


class CosetField:
    """Immutable coset representation; coeffs have shape (S, *comp, (2J+1)^d)."""

    __slots__ = ("shifts", "_coeffs", "K", "d")

    def __init__(self, shifts, coeffs, K: int, d: int):
        shifts = tuple(tuple(int(v) for v in s) for s in shifts)
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.shape[0] != len(shifts):
            raise ValueError("one coefficient block per shift required")
        if len(set(shifts)) != len(shifts) or any(residue(s, K) != s for s in shifts):
            raise ValueError("shifts must be distinct canonical residues mod K")
        coeffs.setflags(write=False)
        self.shifts, self._coeffs, self.K, self.d = shifts, coeffs, int(K), d

    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def J(self) -> int:
        return (self._coeffs.shape[-1] - 1) // 2

    @property
    def comp_shape(self) -> tuple:
        return self._coeffs.shape[1:self._coeffs.ndim - self.d]

    def __repr__(self):
        return f"CosetField(K={self.K}, J={self.J}, cosets={len(self.shifts)}, comp_shape={self.comp_shape})"

    def freqs(self) -> np.ndarray:
        """Frequencies q = r + K j, shape (S, d, lattice)."""
        if not self.shifts:
            return np.zeros((0, self.d) + (2 * self.J + 1,) * self.d)
        return np.stack([lattice_frequencies(self.J, self.d, s, self.K) for s in self.shifts])

    def _bcast(self, arr):
        # (S, lattice) -> (S, 1 * ncomp, lattice)
        return arr.reshape(arr.shape[:1] + (1,) * len(self.comp_shape) + arr.shape[1:])

    def with_coeffs(self, coeffs) -> "CosetField":
        return CosetField(self.shifts, coeffs, self.K, self.d)

    # construction -----------------------------------------------------
    @classmethod
    def from_field(cls, field: SpectralField, K: int, J: int | None = None, shifts=None) -> "CosetField":
        """Split a full-torus field into cosets; modes outside the J-lattice must be zero."""
        d, N = field.d, field.cutoff
        c = field.coeffs
        lead = field.comp_shape
        q = field.freqs().reshape(d, -1).T
        flat = c.reshape(lead + (-1,))
        nz = np.any(np.abs(flat) > 0, axis=tuple(range(len(lead))))
        res = [residue(v, K) for v in q]
        if shifts is None:
            shifts = sorted({res[i] for i in np.flatnonzero(nz)})
        shifts = [tuple(s) for s in shifts]
        need = max((abs(v) for i in np.flatnonzero(nz) for v in (q[i] - np.array(res[i])) // K), default=0)
        J = need if J is None else J
        if need > J:
            raise ValueError(f"field needs coset cutoff {need} > {J}")
        pos = {s: i for i, s in enumerate(shifts)}
        out = np.zeros((len(shifts),) + lead + (2 * J + 1,) * d, dtype=complex)
        for i in np.flatnonzero(nz):
            r = res[i]
            if r not in pos:
                raise ValueError(f"field has content in coset {r} outside the requested shifts")
            j = (q[i] - np.array(r)) // K
            out[(pos[r], Ellipsis) + tuple(J + j)] = flat[..., i]
        return cls(shifts, out, K, d)

    @classmethod
    def zeros(cls, shifts, K: int, J: int, d: int, comp_shape=()):
        return cls(shifts, np.zeros((len(shifts),) + tuple(comp_shape) + (2 * J + 1,) * d), K, d)

    def to_field(self) -> SpectralField:
        """Full-torus field with cutoff K J + max |r|."""
        d, J, K = self.d, self.J, self.K
        rmax = max((abs(v) for s in self.shifts for v in s), default=0)
        N = K * J + rmax
        out = np.zeros(self.comp_shape + (2 * N + 1,) * d, dtype=complex)
        for i, s in enumerate(self.shifts):
            sl = tuple(slice(N + r - K * J, N + r + K * J + 1, K) for r in s)
            out[(Ellipsis,) + sl] += self._coeffs[i]
        return SpectralField(out, d)

    # alignment --------------------------------------------------------
    def resize(self, J: int) -> "CosetField":
        blocks = [resize_coeffs(self._coeffs[i], self.d, J) for i in range(len(self.shifts))]
        shape = (0,) + self.comp_shape + (2 * J + 1,) * self.d
        return self.with_coeffs(np.stack(blocks) if blocks else np.zeros(shape))

    def expand(self, shifts) -> "CosetField":
        shifts = [tuple(s) for s in shifts]
        missing = set(self.shifts) - set(shifts)
        if missing:
            raise ValueError(f"cannot drop cosets {sorted(missing)}")
        out = np.zeros((len(shifts),) + self._coeffs.shape[1:], dtype=complex)
        for i, s in enumerate(shifts):
            if s in self.shifts:
                out[i] = self._coeffs[self.shifts.index(s)]
        return CosetField(shifts, out, self.K, self.d)

    def _aligned(self, other):
        if not isinstance(other, CosetField):
            return None
        if other.K != self.K or other.d != self.d:
            raise ValueError("coset fields live on different lattices")
        shifts = sorted(set(self.shifts) | set(other.shifts))
        J = max(self.J, other.J)
        return self.resize(J).expand(shifts), other.resize(J).expand(shifts)

    # arithmetic -------------------------------------------------------
    def __add__(self, other):
        pair = self._aligned(other)
        if pair is None:
            return NotImplemented
        return pair[0].with_coeffs(pair[0].coeffs + pair[1].coeffs)

    def __sub__(self, other):
        pair = self._aligned(other)
        if pair is None:
            return NotImplemented
        return pair[0].with_coeffs(pair[0].coeffs - pair[1].coeffs)

    def __neg__(self):
        return self.with_coeffs(-self._coeffs)

    def __mul__(self, scalar):
        return self.with_coeffs(self._coeffs * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self.with_coeffs(self._coeffs / scalar)

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        return self.with_coeffs(self._coeffs[(slice(None),) + idx])

    # multipliers ------------------------------------------------------
    def multiplier(self, symbol) -> "CosetField":
        """Apply a scalar Fourier multiplier given as a function of q with shape (d, ...)."""
        q = self.freqs()
        vals = np.stack([symbol(q[i]) for i in range(len(self.shifts))]) if self.shifts else q[:, 0]
        return self.with_coeffs(self._coeffs * self._bcast(vals))

    def derivative(self, alpha) -> "CosetField":
        return self.multiplier(lambda q: symbol_power(q, alpha))

    def steklov(self, eps: float) -> "CosetField":
        if eps <= 0:
            raise ValueError("eps must be positive")
        return self.multiplier(lambda q: np.prod(np.sinc(eps * q), axis=0))

    # norms ------------------------------------------------------------
    def _weighted(self, weight) -> float:
        if not self.shifts:
            return 0.0
        q = self.freqs()
        w = self._bcast(np.stack([weight(q[i]) for i in range(len(self.shifts))]))
        return float(np.sqrt(np.sum(np.abs(self._coeffs) ** 2 * w)))

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self._coeffs) ** 2)))

    def norms(self, m: int) -> dict:
        return {
            "l2": self.l2(),
            "hm": self._weighted(lambda q: 1.0 + order_weight(q, m)),
            "h_negative": self._weighted(lambda q: 1.0 / (1.0 + order_weight(q, m))),
        }

    def inner(self, other: "CosetField") -> complex:
        a, b = self._aligned(other)
        return complex(np.sum(np.conj(a.coeffs) * b.coeffs))

    def zero_modes(self) -> SpectralField:
        """The j = 0 entries as a field on the macroscopic modes r."""
        J, d = self.J, self.d
        c = self._coeffs[(slice(None), Ellipsis) + (J,) * d]
        rmax = max((abs(v) for s in self.shifts for v in s), default=0)
        out = np.zeros(self.comp_shape + (2 * rmax + 1,) * d, dtype=complex)
        for i, s in enumerate(self.shifts):
            out[(Ellipsis,) + tuple(rmax + v for v in s)] = c[i]
        return SpectralField(out, d)
