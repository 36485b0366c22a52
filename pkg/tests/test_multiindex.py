import itertools

import pytest
import sympy as sp
from hypothesis import given, strategies as st

from hihomog.multiindex import (IndexBasis, MultiIndex, Order, compare, count_multiindices, enumerate_multiindices,
                                leibniz_constant, leq, sub_indices)


def sympy_leibniz(alpha, gamma):
    # coefficient of D^gamma w * D^(alpha-gamma) v in D^alpha(w v), read off by expanding on generic functions
    d = len(alpha)
    y = sp.symbols(f"y0:{d}")
    w, v = sp.Function("w")(*y), sp.Function("v")(*y)
    expr = sp.expand(sp.diff(w * v, *[s for s, a in zip(y, alpha) for _ in range(a)]))
    rest = [a - g for a, g in zip(alpha, gamma)]
    dw = sp.diff(w, *[s for s, g in zip(y, gamma) for _ in range(g)]) if sum(gamma) else w
    dv = sp.diff(v, *[s for s, r in zip(y, rest) for _ in range(r)]) if sum(rest) else v
    return int(expr.coeff(dw * dv))


multi = st.lists(st.integers(0, 3), min_size=1, max_size=3).map(MultiIndex)


def test_enumerate_counts_and_order():
    assert enumerate_multiindices(2, 2) == (MultiIndex((0, 2)), MultiIndex((1, 1)), MultiIndex((2, 0)))
    for m, d in itertools.product(range(4), range(1, 4)):
        ind = enumerate_multiindices(m, d)
        assert len(ind) == count_multiindices(m, d)
        assert all(a.order == m for a in ind)
        assert list(ind) == sorted(set(ind))


def test_enumerate_rejects_bad_arguments():
    with pytest.raises(ValueError):
        enumerate_multiindices(-1, 2)
    with pytest.raises(ValueError):
        MultiIndex((1, -1))


def test_leibniz_examples():
    assert leibniz_constant((2, 1), (1, 1)) == 2
    assert leibniz_constant((3, 2), (0, 0)) == 1
    assert leibniz_constant((3, 2), (3, 2)) == 1
    with pytest.raises(ValueError):
        leibniz_constant((1, 0), (0, 1))


@pytest.mark.parametrize("alpha", [(2, 1), (1, 2), (3,), (2, 2), (1, 1, 1)])
def test_leibniz_matches_symbolic_expansion(alpha):
    for gamma in sub_indices(alpha):
        assert leibniz_constant(alpha, gamma) == sympy_leibniz(alpha, gamma)


def test_compare_examples():
    assert compare((1, 0), (2, 0)) is Order.LESS
    assert compare((1, 1), (2, 0)) is Order.INCOMPARABLE
    assert compare((2, 0), (2, 0)) is Order.EQUAL
    with pytest.raises(ValueError):
        compare((1,), (1, 0))


@given(st.integers(1, 3).flatmap(lambda d: st.tuples(*[st.lists(st.integers(0, 3), min_size=d, max_size=d)] * 2)))
def test_leibniz_sum_is_power_of_two(pair):
    a, _ = pair
    alpha = MultiIndex(a)
    assert sum(leibniz_constant(alpha, g) for g in sub_indices(alpha)) == 2 ** alpha.order


@given(multi)
def test_leibniz_symmetry(alpha):
    for g in sub_indices(alpha):
        assert leibniz_constant(alpha, g) == leibniz_constant(alpha, alpha - g)


@given(st.integers(1, 3).flatmap(lambda d: st.tuples(*[st.lists(st.integers(0, 2), min_size=d, max_size=d)] * 3)))
def test_partial_order_is_transitive_and_antisymmetric(triple):
    a, b, c = map(MultiIndex, triple)
    if leq(a, b) and leq(b, c):
        assert leq(a, c)
    if leq(a, b) and leq(b, a):
        assert a == b


@given(multi, st.booleans())
def test_sub_indices(alpha, strict):
    subs = sub_indices(alpha, strict=strict)
    assert all(leq(g, alpha) for g in subs)
    assert (alpha in subs) != strict
    for k in range(alpha.order + 1):
        assert all(g.order == k for g in sub_indices(alpha, k))


def test_index_basis():
    b = IndexBasis(2, 2, 3)
    assert b.mbar == 3 and len(b) == 3
    assert [b.position(a) for a in b] == [0, 1, 2]
    assert b.identity_tensor().shape == (3, 3, 3, 3)
    assert b == IndexBasis(2, 2, 3) and b != IndexBasis(2, 2, 1)
    assert MultiIndex((1, 2)).power([2.0, 3.0]) == 18.0
