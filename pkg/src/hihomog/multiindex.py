"""Multiindex arithmetic, enumeration and Leibniz constants."""
from __future__ import annotations

import enum
import itertools
from functools import lru_cache
from math import comb, prod

import numpy as np


class MultiIndex(tuple):
    """Exponent vector alpha in Z^d_{>=0}; immutable and hashable."""

    def __new__(cls, exponents):
        values = tuple(int(a) for a in exponents)
        if not values:
            raise ValueError("multiindex needs at least one slot")
        if any(a < 0 for a in values):
            raise ValueError(f"negative exponent in {values}")
        return super().__new__(cls, values)

    @property
    def d(self) -> int:
        return len(self)

    @property
    def order(self) -> int:
        return sum(self)

    def __add__(self, other):
        _check_dim(self, other)
        return MultiIndex(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        _check_dim(self, other)
        return MultiIndex(a - b for a, b in zip(self, other))

    def __repr__(self):
        return f"MultiIndex{tuple(self)}"

    def power(self, vec):
        """vec**alpha = prod_i vec_i**alpha_i (broadcasts over leading axes of vec)."""
        vec = np.asarray(vec)
        out = np.ones(vec.shape[:-1], dtype=np.result_type(vec, 1))
        for i, a in enumerate(self):
            if a:
                out = out * vec[..., i] ** a
        return out


def _check_dim(a, b):
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {tuple(a)} vs {tuple(b)}")


def unit(d: int, i: int) -> MultiIndex:
    return MultiIndex(1 if j == i else 0 for j in range(d))


def zero(d: int) -> MultiIndex:
    return MultiIndex((0,) * d)


@lru_cache(maxsize=None)
def enumerate_multiindices(m: int, d: int) -> tuple[MultiIndex, ...]:
    """All alpha with |alpha| = m in lexicographic order."""
    if m < 0 or d < 1:
        raise ValueError(f"need m >= 0 and d >= 1, got m={m}, d={d}")
    out = [MultiIndex(c) for c in itertools.product(range(m + 1), repeat=d) if sum(c) == m]
    return tuple(sorted(out))


def count_multiindices(m: int, d: int) -> int:
    return comb(m + d - 1, d - 1)


class Order(enum.Enum):
    LESS = "less"
    LEQ = "leq"
    INCOMPARABLE = "incomparable"
    EQUAL = "equal"


def compare(gamma, alpha) -> Order:
    """Partial order of componentwise comparison.

    ``LESS`` means gamma <= alpha with strict inequality in some slot; ``LEQ`` is
    never returned for distinct indices and exists for callers that want to
    name the non-strict relation.
    """
    _check_dim(gamma, alpha)
    if tuple(gamma) == tuple(alpha):
        return Order.EQUAL
    if all(g <= a for g, a in zip(gamma, alpha)):
        return Order.LESS
    return Order.INCOMPARABLE


def leq(gamma, alpha) -> bool:
    return compare(gamma, alpha) in (Order.LESS, Order.EQUAL)


def lt(gamma, alpha) -> bool:
    return compare(gamma, alpha) is Order.LESS


def leibniz_constant(alpha, gamma) -> int:
    """c_{alpha,gamma} = prod_i binom(alpha_i, gamma_i) for gamma <= alpha."""
    if not leq(gamma, alpha):
        raise ValueError(f"{tuple(gamma)} is not <= {tuple(alpha)}")
    return prod(comb(a, g) for a, g in zip(alpha, gamma))


def sub_indices(alpha, order: int | None = None, strict: bool = False) -> list[MultiIndex]:
    """All mu <= alpha (or mu < alpha if ``strict``), optionally with |mu| = order."""
    alpha = MultiIndex(alpha)
    out = []
    for c in itertools.product(*(range(a + 1) for a in alpha)):
        mu = MultiIndex(c)
        if strict and mu == alpha:
            continue
        if order is not None and mu.order != order:
            continue
        out.append(mu)
    return out


class IndexBasis:
    """Canonical (lexicographic) list of |alpha| = m multiindices for given d, n."""

    def __init__(self, m: int, d: int, n: int = 1):
        if n < 1:
            raise ValueError("system size n must be >= 1")
        self.m, self.d, self.n = m, d, n
        self.indices = enumerate_multiindices(m, d)
        self._pos = {a: i for i, a in enumerate(self.indices)}

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __getitem__(self, i):
        return self.indices[i]

    def __eq__(self, other):
        return isinstance(other, IndexBasis) and (self.m, self.d, self.n) == (other.m, other.d, other.n)

    def __hash__(self):
        return hash((self.m, self.d, self.n))

    def __repr__(self):
        return f"IndexBasis(m={self.m}, d={self.d}, n={self.n})"

    @property
    def mbar(self) -> int:
        return len(self.indices)

    def position(self, alpha) -> int:
        return self._pos[MultiIndex(alpha)]

    def e(self, alpha, beta) -> int:
        """Kronecker symbol e_{alpha beta}."""
        return int(tuple(alpha) == tuple(beta))

    def ek(self, k: int) -> np.ndarray:
        v = np.zeros(self.n)
        v[k] = 1.0
        return v

    def identity_tensor(self) -> np.ndarray:
        """Array with entries e_{alpha beta} delta_{jk}, shape (mbar, mbar, n, n)."""
        return np.einsum("ab,jk->abjk", np.eye(self.mbar), np.eye(self.n))
