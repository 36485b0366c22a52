import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hihomog.spectral import SpectralField, random_field
from hihomog.torus import CosetField, residue


def test_residue_is_canonical():
    assert residue((5, -3), 4) == (1, 1)
    assert residue((2,), 4) == (2,) and residue((-2,), 4) == (2,)
    assert residue((-1,), 3) == (-1,)
    for K in (2, 3, 8):
        reps = {residue((s,), K) for s in range(-20, 21)}
        assert len(reps) == K


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(1, 2), st.integers(2, 5))
def test_round_trip_and_parseval(seed, d, K):
    f = random_field(np.random.default_rng(seed), d, 6, comp_shape=(2,), real=False)
    C = CosetField.from_field(f, K)
    back = C.to_field().resize(f.cutoff)
    assert np.allclose(back.coeffs, f.coeffs, atol=1e-15)
    for m in (1, 2):
        full, co = f.norms(m), C.norms(m)
        for key in full:
            assert co[key] == pytest.approx(full[key], rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.integers(2, 5))
def test_multipliers_commute_with_embedding(seed, K):
    f = random_field(np.random.default_rng(seed), 2, 5, real=False)
    C = CosetField.from_field(f, K)
    for op_c, op_f in [(lambda x: x.derivative((1, 2)), lambda x: x.derivative((1, 2))),
                       (lambda x: x.steklov(0.3), lambda x: x.steklov(0.3))]:
        a = op_c(C).to_field().resize(f.cutoff)
        assert np.allclose(a.coeffs, op_f(f).coeffs, atol=1e-10)


def test_arithmetic_aligns_cosets():
    a = CosetField.from_field(SpectralField.mode((1,), 1, 3), 4, J=2)
    b = CosetField.from_field(SpectralField.mode((2,), 1, 3), 4, J=1)
    s = a + b
    assert s.shifts == ((1,), (2,)) and s.J == 2
    assert (s - b).l2() == pytest.approx(1.0)
    assert (2 * a / 4).l2() == pytest.approx(0.5)
    assert a.inner(b) == 0 and a.inner(a) == pytest.approx(1.0)


def test_zero_modes_and_errors():
    f = SpectralField.mode((1,), 1, 9) + SpectralField.mode((9,), 1, 9)
    C = CosetField.from_field(f, 8)
    z = C.zero_modes()
    assert np.isclose(z.coeffs[z.cutoff + 1], 1.0) and np.sum(np.abs(z.coeffs)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        CosetField.from_field(SpectralField.mode((30,), 1), 4, J=2)
    with pytest.raises(ValueError):
        CosetField([(5,)], np.zeros((1, 3)), 4, 1)
    with pytest.raises(ValueError):
        CosetField.from_field(f, 8).expand([(0,)])
