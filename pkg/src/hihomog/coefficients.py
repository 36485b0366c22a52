"""Periodic coefficient arrays A = {A^{jk}_{alpha beta}(y)} for order-2m systems."""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla

from .multiindex import IndexBasis, MultiIndex
from .spectral import (SpectralField, analyze, frequencies, grid_size, order_weight, symbol_power,
                       synthesize)


class CoefficientError(ValueError):
    """Inadmissible coefficient family or parameters."""


class CoefficientArray:
    """Coefficient array stored as one SpectralField with components (alpha, beta, j, k).

    ``lambda0`` and ``lambda1`` default to the pointwise bounds measured on an
    oversampled grid: the smallest eigenvalue of the Hermitian part and the
    largest singular value of the (n*mbar) x (n*mbar) matrix A(y).  The
    pointwise lambda0 implies the Garding inequality for every test function.
    """

    def __init__(self, basis: IndexBasis, entries: SpectralField, lambda0: float | None = None,
                 lambda1: float | None = None, name: str = "custom", params: dict | None = None):
        mb, n = basis.mbar, basis.n
        if entries.d != basis.d or entries.comp_shape != (mb, mb, n, n):
            raise CoefficientError(f"entries shape {entries.comp_shape} incompatible with {basis}")
        self.basis = basis
        self.entries = entries
        self.name = name
        self.params = dict(params or {})
        lo, hi = self.pointwise_bounds()
        self.lambda0 = lo if lambda0 is None else float(lambda0)
        self.lambda1 = hi if lambda1 is None else float(lambda1)
        if hi > self.lambda1 * (1 + 1e-9) + 1e-12:
            raise CoefficientError(f"sup norm {hi:.6g} exceeds declared lambda1 {self.lambda1:.6g}")
        if self.lambda0 <= 0:
            raise CoefficientError(f"non-positive ellipticity constant {self.lambda0:.6g}")

    # shape helpers ----------------------------------------------------
    @property
    def d(self):
        return self.basis.d

    @property
    def m(self):
        return self.basis.m

    @property
    def n(self):
        return self.basis.n

    @property
    def band(self) -> int:
        """Largest |k_i| carrying a non-negligible coefficient."""
        c = np.abs(self.entries.coeffs)
        scale = max(float(c.max(initial=0.0)), 1e-300)
        mask = np.any(c.reshape((-1,) + c.shape[-self.d:]) > 1e-15 * scale, axis=0)
        if not mask.any():
            return 0
        q = frequencies(self.entries.cutoff, self.d)
        return int(np.max(np.abs(q[:, mask])))

    def entry(self, alpha, beta) -> SpectralField:
        """n x n matrix-valued field A_{alpha beta}."""
        b = self.basis
        return self.entries[b.position(alpha), b.position(beta)]

    def mean(self) -> np.ndarray:
        """<A> with shape (mbar, mbar, n, n)."""
        return np.array(self.entries.mean())

    def grid_values(self, M: int) -> np.ndarray:
        return synthesize(self.entries.coeffs, self.d, M)

    def pointwise_matrices(self, M: int | None = None) -> np.ndarray:
        """A(y) as (n*mbar)^2 matrices on a grid, row index (alpha, j)."""
        M = grid_size(4 * (2 * self.entries.cutoff + 1)) if M is None else M
        v = self.grid_values(M)
        mb, n = self.basis.mbar, self.n
        v = np.moveaxis(v, (0, 1, 2, 3), (-4, -2, -3, -1))
        return v.reshape((-1, mb * n, mb * n))

    def pointwise_bounds(self) -> tuple[float, float]:
        mats = self.pointwise_matrices()
        herm = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
        lo = float(np.min(np.linalg.eigvalsh(herm)))
        hi = float(np.max(np.linalg.norm(mats, ord=2, axis=(-2, -1))))
        return lo, hi

    def is_real(self) -> bool:
        return self.entries.is_real()

    def is_self_adjoint(self, tol: float = 1e-13) -> bool:
        diff = self.adjoint().entries - self.entries
        return float(np.max(np.abs(diff.coeffs), initial=0.0)) <= tol

    def is_constant(self) -> bool:
        c = np.array(self.entries.coeffs)
        c[(Ellipsis,) + (self.entries.cutoff,) * self.d] = 0
        return float(np.max(np.abs(c), initial=0.0)) == 0.0

    # operations -------------------------------------------------------
    def adjoint(self) -> "CoefficientArray":
        """A*^{jk}_{alpha beta}(y) = conj(A^{kj}_{beta alpha}(y))."""
        c = self.entries.conj().coeffs
        c = np.transpose(c, (1, 0, 3, 2) + tuple(range(4, c.ndim)))
        return CoefficientArray(self.basis, SpectralField(c, self.d), self.lambda0, self.lambda1,
                                name=f"{self.name}*", params=self.params)

    def check_coercivity(self, sample_cutoff: int = 8, tol: float = 1e-12) -> "CoercivityEstimate":
        return check_coercivity(self, sample_cutoff, tol)

    # I/O --------------------------------------------------------------
    def to_manifest(self) -> dict:
        b = self.basis
        entries = []
        q = frequencies(self.entries.cutoff, self.d)
        for ia, alpha in enumerate(b):
            for ib, beta in enumerate(b):
                for j in range(self.n):
                    for k in range(self.n):
                        c = self.entries.coeffs[ia, ib, j, k]
                        nz = np.argwhere(np.abs(c) > 0)
                        modes = [{"k": [int(q[(ax,) + tuple(idx)]) for ax in range(self.d)],
                                  "re": float(c[tuple(idx)].real), "im": float(c[tuple(idx)].imag)}
                                 for idx in nz]
                        if modes:
                            entries.append({"alpha": list(alpha), "beta": list(beta), "j": j, "k": k,
                                            "modes": modes})
        return {"schema": "hihomog-coeffs/1", "name": self.name, "params": self.params,
                "d": self.d, "m": self.m, "n": self.n,
                "lambda0": self.lambda0, "lambda1": self.lambda1, "entries": entries}

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_manifest(), indent=1))

    @classmethod
    def from_manifest(cls, data: dict) -> "CoefficientArray":
        d, m, n = int(data["d"]), int(data["m"]), int(data["n"])
        basis = IndexBasis(m, d, n)
        cutoff = 0
        for e in data["entries"]:
            for md in e["modes"]:
                if len(md["k"]) != d:
                    raise CoefficientError("mode vector length differs from d")
                cutoff = max(cutoff, max(abs(int(v)) for v in md["k"]))
        c = np.zeros((basis.mbar, basis.mbar, n, n) + (2 * cutoff + 1,) * d, dtype=complex)
        for e in data["entries"]:
            ia = basis.position(MultiIndex(e["alpha"]))
            ib = basis.position(MultiIndex(e["beta"]))
            for md in e["modes"]:
                idx = tuple(cutoff + int(v) for v in md["k"])
                c[(ia, ib, int(e["j"]), int(e["k"])) + idx] += md["re"] + 1j * md["im"]
        return cls(basis, SpectralField(c, d), data.get("lambda0"), data.get("lambda1"),
                   name=data.get("name", "file"), params=data.get("params"))

    @classmethod
    def load(cls, path) -> "CoefficientArray":
        return cls.from_manifest(json.loads(Path(path).read_text()))

    def __repr__(self):
        return (f"CoefficientArray({self.name}, d={self.d}, m={self.m}, n={self.n}, "
                f"lambda0={self.lambda0:.4g}, lambda1={self.lambda1:.4g})")


class CoercivityEstimate(float):
    """Float subclass carrying the outcome of the Rayleigh-quotient estimate."""

    admissible: bool

    def __new__(cls, value, admissible):
        obj = super().__new__(cls, value)
        obj.admissible = bool(admissible)
        return obj


def check_coercivity(A: CoefficientArray, sample_cutoff: int = 8, tol: float = 1e-12) -> CoercivityEstimate:
    """Smallest Rayleigh quotient Re(grad^m phi, A grad^m phi)/||grad^m phi||^2.

    Taken over mean-zero trigonometric polynomials with modes up to
    ``sample_cutoff``.  The quotient is the lowest eigenvalue of the Hermitian
    operator w -> Herm(P^* A P) w, where P lifts w to the unit-normalized
    gradient array.  Lanczos is used; small problems go dense.  Returns a
    value flagged inadmissible when it is not positive.
    """
    b = A.basis
    d, n, mb = b.d, b.n, b.mbar
    q = frequencies(sample_cutoff, d)
    S = order_weight(q, b.m)
    nz = S > 0
    S_safe = np.where(nz, S, 1.0)
    P = np.stack([symbol_power(q, a) for a in b]) / np.sqrt(S_safe)  # (mb, lattice)
    P = P * nz
    M = grid_size(2 * sample_cutoff + A.entries.cutoff + 2 * sample_cutoff + 1)
    sides = (2 * sample_cutoff + 1,) * d
    size = n * int(np.prod(sides))
    mask = np.broadcast_to(nz, (n,) + sides).ravel()
    ndof = int(mask.sum())

    def form(Ag):
        def apply(w):
            full = np.zeros(size, dtype=complex)
            full[mask] = w
            F = P[:, None] * full.reshape((n,) + sides)[None]  # (mb, n, lattice)
            Gv = np.einsum("abjk...,bk...->aj...", Ag, synthesize(F, d, M))
            G = analyze(Gv, d, sample_cutoff)
            return np.sum(np.conj(P)[:, None] * G, axis=0).ravel()[mask]
        return apply

    apply = form(A.grid_values(M))
    if ndof <= 600:
        cols = np.eye(ndof, dtype=complex)
        T = np.column_stack([apply(cols[:, i]) for i in range(ndof)])
        val = float(np.linalg.eigvalsh(0.5 * (T + T.conj().T))[0])
    else:
        apply_star = form(A.adjoint().grid_values(M))
        herm = spla.LinearOperator((ndof, ndof), dtype=complex,
                                   matvec=lambda w: 0.5 * (apply(w) + apply_star(w)))
        v0 = np.ones(ndof, dtype=complex)
        val = float(spla.eigsh(herm, k=1, which="SA", tol=tol, v0=v0, return_eigenvectors=False)[0])
    return CoercivityEstimate(val, val > 0)


# ----------------------------------------------------------------------
# built-in families

def _scalar_array(basis: IndexBasis, a: SpectralField, pattern: np.ndarray | None = None) -> SpectralField:
    """A_{alpha beta} = a(y) * pattern_{alpha beta} * I_n (pattern defaults to e_{alpha beta})."""
    mb, n = basis.mbar, basis.n
    pattern = np.eye(mb) if pattern is None else np.asarray(pattern)
    c = np.einsum("ab,jk,...->abjk...", pattern, np.eye(n), a.coeffs)
    return SpectralField(c, basis.d)


def harmonic(m: int = 1, cutoff: int = 24) -> CoefficientArray:
    """1D scalar a(y) = 1/(2 + cos 2 pi y), truncated at ``cutoff`` modes."""
    basis = IndexBasis(m, 1, 1)
    a = SpectralField.from_function(lambda y: 1.0 / (2.0 + np.cos(2 * np.pi * y)), 1, cutoff, oversample=8)
    a = (a + a.conj()) * 0.5
    return CoefficientArray(basis, _scalar_array(basis, a), name="harmonic",
                            params={"m": m, "cutoff": cutoff})


def constant(matrix=None, d: int = 1, m: int = 1, n: int = 1) -> CoefficientArray:
    """Constant array from an (n*mbar)^2 matrix with row index (alpha, j); identity by default."""
    basis = IndexBasis(m, d, n)
    mb = basis.mbar
    if matrix is None:
        matrix = np.eye(mb * n)
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (mb * n, mb * n):
        raise CoefficientError(f"constant matrix must be {(mb * n, mb * n)}, got {matrix.shape}")
    t = matrix.reshape(mb, n, mb, n).transpose(0, 2, 1, 3)  # (alpha, beta, j, k)
    c = t.reshape(t.shape + (1,) * d)
    return CoefficientArray(basis, SpectralField(c, d), name="constant",
                            params={"d": d, "m": m, "n": n, "matrix": _encode_matrix(matrix)})


def separable(m: int = 2, rho1: float = 0.5, rho2: float = 0.4) -> CoefficientArray:
    """2D real scalar a(y) = (1 + rho1 cos 2pi y1)(1 + rho2 cos 4pi y2 + 0.5 rho2 sin 2pi y2).

    Band limit 2; coercive for |rho1| < 1 and 1.5|rho2| < 1.
    """
    if abs(rho1) >= 0.9 or 1.5 * abs(rho2) >= 0.9:
        raise CoefficientError("separable family needs |rho1| < 0.9 and |rho2| < 0.6")
    basis = IndexBasis(m, 2, 1)
    a = SpectralField.from_function(
        lambda y1, y2: (1 + rho1 * np.cos(2 * np.pi * y1))
        * (1 + rho2 * np.cos(4 * np.pi * y2) + 0.5 * rho2 * np.sin(2 * np.pi * y2)),
        2, 3)
    return CoefficientArray(basis, _scalar_array(basis, a), name="separable",
                            params={"m": m, "rho1": rho1, "rho2": rho2})


_J = np.array([[0.0, -1.0], [1.0, 0.0]])


def nonsym(m: int = 2, rho: float = 0.3, d: int = 1) -> CoefficientArray:
    """n = 2 system A_{alpha beta} = e_{alpha beta} (I + rho J phi(y)), J the rotation generator.

    phi(y) = cos 2pi y1 for d = 1.  For d = 2 the profile
    phi = cos 2pi y1 + sin 2pi(y1 + y2) is used so that the cell data carry
    no parity symmetry.  The Hermitian part of A is the identity, so lambda0 = 1.
    """
    if abs(rho) > 0.4:
        raise CoefficientError("nonsym family requires |rho| <= 0.4")
    if d == 1:
        phi = SpectralField.from_function(lambda y: np.cos(2 * np.pi * y), 1, 1)
    elif d == 2:
        phi = SpectralField.from_function(
            lambda y1, y2: np.cos(2 * np.pi * y1) + np.sin(2 * np.pi * (y1 + y2)), 2, 1)
    else:
        raise CoefficientError("nonsym family is defined for d in {1, 2}")
    basis = IndexBasis(m, d, 2)
    mb = basis.mbar
    c = np.einsum("ab,jk,...->abjk...", np.eye(mb), np.eye(2), SpectralField.constant(1.0, d, 1).coeffs)
    c = c + rho * np.einsum("ab,jk,...->abjk...", np.eye(mb), _J, phi.coeffs)
    return CoefficientArray(basis, SpectralField(c, d), name="nonsym", params={"m": m, "rho": rho, "d": d})


def complex_family(m: int = 2, rho: float = 0.3, d: int = 1) -> CoefficientArray:
    """Scalar a(y) = 1 + rho cos 2pi y1 + i rho sin 2pi y1 = 1 + rho exp(2 pi i y1)."""
    if abs(rho) > 0.4:
        raise CoefficientError("complex family requires |rho| <= 0.4")
    basis = IndexBasis(m, d, 1)
    k = (1,) + (0,) * (d - 1)
    a = SpectralField.constant(1.0, d, 1) + SpectralField.mode(k, d, 1, amplitude=rho)
    return CoefficientArray(basis, _scalar_array(basis, a), name="complex", params={"m": m, "rho": rho, "d": d})


def skew(m: int = 2, rho: float = 0.4, d: int = 2) -> CoefficientArray:
    """Real scalar A_{alpha beta} = e_{alpha beta} + rho phi(y) S_{alpha beta}, S skew in the multiindices.

    phi = cos 2pi y1 + cos 2pi y2 + sin 2pi(y1 + y2) has no centre of symmetry
    and S couples neighbouring multiindices.  A is real but A_{alpha beta} differs
    from A_{beta alpha}, which is what makes the third-order symbol nonzero.
    The Hermitian part is the identity, so lambda0 = 1.
    """
    if abs(rho) > 0.4:
        raise CoefficientError("skew family requires |rho| <= 0.4")
    if d != 2:
        raise CoefficientError("skew family is defined for d = 2")
    basis = IndexBasis(m, d, 1)
    mb = basis.mbar
    if mb < 2:
        raise CoefficientError("skew family needs at least two multiindices")
    S = np.diag(np.ones(mb - 1), 1) - np.diag(np.ones(mb - 1), -1)
    phi = SpectralField.from_function(
        lambda y1, y2: np.cos(2 * np.pi * y1) + np.cos(2 * np.pi * y2) + np.sin(2 * np.pi * (y1 + y2)), 2, 1)
    a = _scalar_array(basis, SpectralField.constant(1.0, d, 1)).coeffs
    a = a + rho * _scalar_array(basis, phi, S).coeffs
    return CoefficientArray(basis, SpectralField(a, d), name="skew", params={"m": m, "rho": rho, "d": d})


def _encode_matrix(mat) -> list:
    mat = np.asarray(mat)
    return [[[float(v.real), float(v.imag)] for v in row] for row in mat]


def _decode_matrix(data):
    return np.array([[complex(re, im) for re, im in row] for row in data])


CATALOGUE = {
    "harmonic": harmonic,
    "constant": constant,
    "separable": separable,
    "nonsym": nonsym,
    "complex": complex_family,
    "skew": skew,
}


def builtin(name: str, **params) -> CoefficientArray:
    """Construct a catalogued family; unknown names and bad parameters raise CoefficientError."""
    try:
        factory = CATALOGUE[name]
    except KeyError:
        raise CoefficientError(f"unknown builtin family {name!r}; choose from {sorted(CATALOGUE)}") from None
    if name == "constant" and "matrix" in params and params["matrix"] is not None:
        mat = params["matrix"]
        if isinstance(mat, list) and mat and isinstance(mat[0], list) and mat[0] and isinstance(mat[0][0], list):
            params = dict(params, matrix=_decode_matrix(mat))
    try:
        return factory(**params)
    except TypeError as exc:
        raise CoefficientError(f"bad parameters for {name}: {exc}") from None


def parse_builtin_spec(text: str) -> CoefficientArray:
    """Parse ``name:key=val,key=val`` as used by the --builtin CLI flag."""
    name, _, rest = text.partition(":")
    params = {}
    for item in filter(None, rest.split(",")):
        key, _, val = item.partition("=")
        try:
            params[key.strip()] = int(val)
        except ValueError:
            params[key.strip()] = float(val)
    return builtin(name.strip(), **params)
