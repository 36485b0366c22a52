"""Truncated Fourier fields on the unit torus [0,1)^d.

A :class:`SpectralField` stores centered coefficients c(k), |k_i| <= cutoff, of
``phi(y) = sum_k c(k) exp(2 pi i k.y)``.  Leading array axes are component
axes, so vector fields and arrays of fields share one representation.
"""
from __future__ import annotations

import io
import json
from pathlib import Path

import numpy as np
import scipy.fft as sfft

from .multiindex import IndexBasis, MultiIndex, enumerate_multiindices

_MAGIC = "hihomog-field"


def frequencies(cutoff: int, d: int) -> np.ndarray:
    """Integer frequency grid of shape (d, 2N+1, ..., 2N+1), centered ordering."""
    k = np.arange(-cutoff, cutoff + 1)
    return np.stack(np.meshgrid(*([k] * d), indexing="ij"))


def symbol_power(freq: np.ndarray, alpha) -> np.ndarray:
    """(2 pi i q)^alpha for a stacked frequency array q of shape (d, ...)."""
    out = np.ones(freq.shape[1:], dtype=complex)
    for i, a in enumerate(alpha):
        if a:
            out = out * (2j * np.pi * freq[i]) ** a
    return out


def order_weight(freq: np.ndarray, m: int) -> np.ndarray:
    """sum_{|alpha|=m} (2 pi q)^{2 alpha}, the per-mode weight of ||grad^m phi||^2."""
    d = freq.shape[0]
    w = np.zeros(freq.shape[1:])
    for alpha in enumerate_multiindices(m, d):
        w += np.abs(symbol_power(freq, alpha)) ** 2
    return w


def steklov_symbol(freq: np.ndarray, eps: float) -> np.ndarray:
    """prod_j sinc(pi eps q_j); numpy's sinc already carries the factor pi."""
    out = np.ones(freq.shape[1:])
    for i in range(freq.shape[0]):
        out = out * np.sinc(eps * freq[i])
    return out


def grid_size(n: int) -> int:
    return sfft.next_fast_len(int(n))


def _scatter_index(cutoff: int, M: int):
    return np.arange(-cutoff, cutoff + 1) % M


def synthesize(coeffs: np.ndarray, d: int, M: int) -> np.ndarray:
    """Values on the uniform M^d grid y = j/M from centered coefficients."""
    cutoff = (coeffs.shape[-1] - 1) // 2
    if M < 2 * cutoff + 1:
        raise ValueError(f"grid {M} too small for cutoff {cutoff}")
    lead = coeffs.shape[:-d]
    full = np.zeros(lead + (M,) * d, dtype=complex)
    idx = _scatter_index(cutoff, M)
    full[(Ellipsis,) + np.ix_(*([idx] * d))] = coeffs
    axes = tuple(range(-d, 0))
    return sfft.ifftn(full, axes=axes, norm="forward")


def analyze(values: np.ndarray, d: int, cutoff: int) -> np.ndarray:
    """Centered coefficients |k_i| <= cutoff of grid samples (last d axes)."""
    M = values.shape[-1]
    axes = tuple(range(-d, 0))
    full = sfft.fftn(values, axes=axes, norm="forward")
    if M >= 2 * cutoff + 1:
        idx = _scatter_index(cutoff, M)
        return full[(Ellipsis,) + np.ix_(*([idx] * d))]
    # requested cutoff exceeds what the grid resolves: zero-pad
    inner = (M - 1) // 2
    out = np.zeros(values.shape[:-d] + (2 * cutoff + 1,) * d, dtype=complex)
    sl = (Ellipsis,) + (slice(cutoff - inner, cutoff + inner + 1),) * d
    out[sl] = analyze(values, d, inner)
    return out


def resize_coeffs(coeffs: np.ndarray, d: int, cutoff: int) -> np.ndarray:
    old = (coeffs.shape[-1] - 1) // 2
    if cutoff == old:
        return coeffs
    lead = coeffs.shape[:-d]
    out = np.zeros(lead + (2 * cutoff + 1,) * d, dtype=complex)
    c = min(old, cutoff)
    src = (Ellipsis,) + (slice(old - c, old + c + 1),) * d
    dst = (Ellipsis,) + (slice(cutoff - c, cutoff + c + 1),) * d
    out[dst] = coeffs[src]
    return out


class SpectralField:
    """Immutable truncated Fourier field; see module docstring for layout."""

    __slots__ = ("_coeffs", "d")

    def __init__(self, coeffs, d: int):
        coeffs = np.array(coeffs, dtype=complex)
        if coeffs.ndim < d:
            raise ValueError("coefficient array has fewer axes than d")
        sides = coeffs.shape[coeffs.ndim - d:]
        if len(set(sides)) != 1 or sides[0] % 2 != 1:
            raise ValueError(f"spectral axes must be equal and odd, got {sides}")
        coeffs.setflags(write=False)
        self._coeffs = coeffs
        self.d = d

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, d: int, cutoff: int, comp_shape=()):
        return cls(np.zeros(tuple(comp_shape) + (2 * cutoff + 1,) * d), d)

    @classmethod
    def constant(cls, value, d: int, cutoff: int = 0):
        value = np.asarray(value, dtype=complex)
        c = np.zeros(value.shape + (2 * cutoff + 1,) * d, dtype=complex)
        c[(Ellipsis,) + (cutoff,) * d] = value
        return cls(c, d)

    @classmethod
    def mode(cls, k, d: int, cutoff: int | None = None, amplitude=1.0):
        """Single exponential amplitude * exp(2 pi i k.y)."""
        k = tuple(int(v) for v in k)
        if len(k) != d:
            raise ValueError("mode vector length must equal d")
        cutoff = max(abs(v) for v in k) if cutoff is None else cutoff
        c = np.zeros((2 * cutoff + 1,) * d, dtype=complex)
        c[tuple(cutoff + v for v in k)] = amplitude
        return cls(c, d)

    @classmethod
    def from_samples(cls, values, d: int, cutoff: int | None = None):
        values = np.asarray(values)
        M = values.shape[-1]
        cutoff = (M - 1) // 2 if cutoff is None else cutoff
        return cls(analyze(values, d, cutoff), d)

    @classmethod
    def from_function(cls, func, d: int, cutoff: int, oversample: int = 4):
        """Sample ``func(*y)`` on a grid and keep modes up to ``cutoff``."""
        M = grid_size(oversample * (2 * cutoff + 1))
        y = np.meshgrid(*([np.arange(M) / M] * d), indexing="ij")
        return cls.from_samples(np.asarray(func(*y), dtype=complex), d, cutoff)

    # basic properties -------------------------------------------------
    @property
    def coeffs(self) -> np.ndarray:
        return self._coeffs

    @property
    def cutoff(self) -> int:
        return (self._coeffs.shape[-1] - 1) // 2

    @property
    def comp_shape(self) -> tuple:
        return self._coeffs.shape[: self._coeffs.ndim - self.d]

    @property
    def dtype(self):
        return self._coeffs.dtype

    def freqs(self) -> np.ndarray:
        return frequencies(self.cutoff, self.d)

    def mean(self):
        """<phi> = integral over Y, i.e. the zero mode."""
        return self._coeffs[(Ellipsis,) + (self.cutoff,) * self.d]

    def __getitem__(self, idx):
        if not isinstance(idx, tuple):
            idx = (idx,)
        if len(idx) > len(self.comp_shape):
            raise IndexError("indexing beyond component axes")
        return SpectralField(self._coeffs[idx], self.d)

    def __repr__(self):
        return f"SpectralField(d={self.d}, cutoff={self.cutoff}, comp_shape={self.comp_shape})"

    def with_coeffs(self, coeffs) -> "SpectralField":
        return SpectralField(coeffs, self.d)

    def resize(self, cutoff: int) -> "SpectralField":
        return SpectralField(resize_coeffs(self._coeffs, self.d, cutoff), self.d)

    def values(self, M: int | None = None) -> np.ndarray:
        M = grid_size(2 * self.cutoff + 1) if M is None else M
        return synthesize(self._coeffs, self.d, M)

    def conj(self) -> "SpectralField":
        """Complex conjugate field: c(k) -> conj(c(-k))."""
        flip = tuple(range(-self.d, 0))
        return SpectralField(np.conj(np.flip(self._coeffs, axis=flip)), self.d)

    def is_real(self, tol: float = 1e-13) -> bool:
        diff = np.max(np.abs(self._coeffs - self.conj()._coeffs), initial=0.0)
        return diff <= tol * max(1.0, np.max(np.abs(self._coeffs), initial=0.0))

    # arithmetic -------------------------------------------------------
    def _aligned(self, other):
        if isinstance(other, SpectralField):
            if other.d != self.d:
                raise ValueError("dimension mismatch")
            c = max(self.cutoff, other.cutoff)
            return resize_coeffs(self._coeffs, self.d, c), resize_coeffs(other._coeffs, self.d, c)
        return None

    def __add__(self, other):
        pair = self._aligned(other)
        if pair is None:
            return NotImplemented
        return SpectralField(pair[0] + pair[1], self.d)

    def __sub__(self, other):
        pair = self._aligned(other)
        if pair is None:
            return NotImplemented
        return SpectralField(pair[0] - pair[1], self.d)

    def __neg__(self):
        return SpectralField(-self._coeffs, self.d)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return multiply(self, scalar)
        return SpectralField(self._coeffs * scalar, self.d)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return SpectralField(self._coeffs / scalar, self.d)

    # calculus ---------------------------------------------------------
    def derivative(self, alpha) -> "SpectralField":
        return derivative(self, alpha)

    def steklov(self, eps: float) -> "SpectralField":
        return steklov(self, eps)

    def rescale(self, K: int) -> "SpectralField":
        return rescale(self, K)

    def norms(self, m: int) -> dict:
        return norms(self, m)

    def l2(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self._coeffs) ** 2)))

    # serialization ----------------------------------------------------
    def to_bytes(self) -> bytes:
        header = {
            "format": _MAGIC,
            "version": 1,
            "d": self.d,
            "cutoff": self.cutoff,
            "comp_shape": list(self.comp_shape),
            "dtype": "complex128",
            "byteorder": "little",
        }
        payload = np.ascontiguousarray(self._coeffs, dtype="<c16").tobytes(order="C")
        return json.dumps(header).encode() + b"\n" + payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SpectralField":
        head, _, payload = blob.partition(b"\n")
        header = json.loads(head)
        if header.get("format") != _MAGIC:
            raise ValueError("not a field file")
        d, cutoff = header["d"], header["cutoff"]
        shape = tuple(header["comp_shape"]) + (2 * cutoff + 1,) * d
        arr = np.frombuffer(payload, dtype="<c16").reshape(shape)
        return cls(arr.astype(complex), d)

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "SpectralField":
        return cls.from_bytes(Path(path).read_bytes())

    def to_csv(self, path=None, M: int | None = None) -> str:
        """Grid samples as CSV: y_1..y_d, then re/im per flattened component."""
        M = grid_size(2 * self.cutoff + 1) if M is None else M
        vals = self.values(M)
        ncomp = int(np.prod(self.comp_shape)) if self.comp_shape else 1
        flat = vals.reshape((ncomp,) + (M,) * self.d)
        grids = np.meshgrid(*([np.arange(M) / M] * self.d), indexing="ij")
        cols = [g.ravel() for g in grids]
        names = [f"y{i + 1}" for i in range(self.d)]
        for c in range(ncomp):
            cols += [flat[c].real.ravel(), flat[c].imag.ravel()]
            names += [f"re{c}", f"im{c}"]
        buf = io.StringIO()
        np.savetxt(buf, np.column_stack(cols), delimiter=",", header=",".join(names), comments="")
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text


def derivative(phi: SpectralField, alpha) -> SpectralField:
    alpha = MultiIndex(alpha)
    if alpha.d != phi.d:
        raise ValueError("multiindex dimension mismatch")
    return phi.with_coeffs(phi.coeffs * symbol_power(phi.freqs(), alpha))


def gradient_array(phi: SpectralField, m: int, basis: IndexBasis | None = None) -> "FieldArray":
    """(grad^m phi)_{j,gamma} = D^gamma phi_j; phi is a vector field (comp axis = n)."""
    if len(phi.comp_shape) > 1:
        raise ValueError("gradient_array expects a scalar or vector field")
    vec = phi if phi.comp_shape else phi.with_coeffs(phi.coeffs[None])
    n = vec.comp_shape[0]
    basis = IndexBasis(m, phi.d, n) if basis is None else basis
    q = vec.freqs()
    stack = np.stack([vec.coeffs * symbol_power(q, g) for g in basis], axis=1)
    return FieldArray(stack, basis)


def multiply(a: SpectralField, b: SpectralField, cutoff: int | None = None) -> SpectralField:
    """Product of two fields, exact on every retained mode.

    The grid holds at least ``cutoff + cutoff_a + cutoff_b + 1`` points per axis,
    so no alias lands on a retained frequency.  ``cutoff`` defaults to the larger
    input cutoff; pass ``a.cutoff + b.cutoff`` for the untruncated product.
    Component axes broadcast numpy-style.
    """
    if a.d != b.d:
        raise ValueError("dimension mismatch")
    d = a.d
    out_cut = max(a.cutoff, b.cutoff) if cutoff is None else cutoff
    M = grid_size(out_cut + a.cutoff + b.cutoff + 1)
    va = synthesize(a.coeffs, d, M)
    vb = synthesize(b.coeffs, d, M)
    return SpectralField(analyze(va * vb, d, out_cut), d)


def steklov(phi, eps: float):
    """Steklov average over the eps-scaled unit cube; works on fields and field arrays."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    sig = steklov_symbol(phi.freqs(), eps)
    return phi.with_coeffs(phi.coeffs * sig)


def rescale(phi: SpectralField, K: int) -> SpectralField:
    """x -> phi(K x): relabels frequency k as K k on the unit torus."""
    K = int(K)
    if K < 1:
        raise ValueError("K must be a positive integer")
    if K == 1:
        return phi
    N = phi.cutoff
    lead = phi.comp_shape
    out = np.zeros(lead + (2 * K * N + 1,) * phi.d, dtype=complex)
    sl = (Ellipsis,) + (slice(0, 2 * K * N + 1, K),) * phi.d
    out[sl] = phi.coeffs
    return phi.with_coeffs(out)


def inner(a, b) -> complex:
    """(a, b) = sum over components and modes of conj(a) b; first slot conjugated."""
    if a.d != b.d:
        raise ValueError("dimension mismatch")
    c = max(a.cutoff, b.cutoff)
    ca = resize_coeffs(a.coeffs, a.d, c)
    cb = resize_coeffs(b.coeffs, b.d, c)
    return complex(np.sum(np.conj(ca) * cb))


def norms(phi: SpectralField, m: int) -> dict:
    """Parseval-exact L2, H^m and H^{-m} norms (component axes summed)."""
    q = phi.freqs()
    w = 1.0 + order_weight(q, m)
    p = np.abs(phi.coeffs) ** 2
    axes = tuple(range(p.ndim))
    return {
        "l2": float(np.sqrt(np.sum(p, axis=axes))),
        "hm": float(np.sqrt(np.sum(p * w, axis=axes))),
        "h_negative": float(np.sqrt(np.sum(p / w, axis=axes))),
    }


def seminorm(phi: SpectralField, m: int) -> float:
    """||grad^m phi|| with the multiindex-array convention (no multinomial weights)."""
    q = phi.freqs()
    return float(np.sqrt(np.sum(np.abs(phi.coeffs) ** 2 * order_weight(q, m))))


class FieldArray(SpectralField):
    """Array {F_{j,gamma}} with component axes (n, mbar) tied to an IndexBasis."""

    __slots__ = ("basis",)

    def __init__(self, coeffs, basis: IndexBasis):
        super().__init__(coeffs, basis.d)
        if self.comp_shape != (basis.n, basis.mbar):
            raise ValueError(f"component shape {self.comp_shape} does not match {basis}")
        self.basis = basis

    def with_coeffs(self, coeffs):
        return FieldArray(coeffs, self.basis)

    def entry(self, j: int, gamma) -> SpectralField:
        return SpectralField(self.coeffs[j, self.basis.position(gamma)], self.d)

    def __repr__(self):
        return f"FieldArray({self.basis}, cutoff={self.cutoff})"


def random_field(rng: np.random.Generator, d: int, cutoff: int, comp_shape=(), decay: float = 0.0,
                 real: bool = True, mean_zero: bool = False) -> SpectralField:
    """Random band-limited field with amplitudes ~ (1+|k|)^-decay, unit L2 norm."""
    shape = tuple(comp_shape) + (2 * cutoff + 1,) * d
    c = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    if decay:
        q = frequencies(cutoff, d)
        c = c * (1.0 + np.sqrt(np.sum(q.astype(float) ** 2, axis=0))) ** (-decay)
    f = SpectralField(c, d)
    if real:
        f = (f + f.conj()) * 0.5
    if mean_zero:
        cc = np.array(f.coeffs)
        cc[(Ellipsis,) + (cutoff,) * d] = 0
        f = SpectralField(cc, d)
    nrm = f.l2()
    return f / nrm if nrm > 0 else f
