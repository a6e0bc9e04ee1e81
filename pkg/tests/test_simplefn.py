from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadrep.grid import DyadicRational, ShiftSequence, cube, cubes_meeting
from dyadrep.simplefn import (D_block, D_block_upto, D_gen, D_op, D_pq, E_block, E_op, F_op, Rect,
                              SimpleFunction, average, integral, pairing)

from strategies import simple_functions, thetas

D = DyadicRational
ind = SimpleFunction.indicator
Z = ShiftSequence.zero(1, -8, 8)


def test_pairing_and_integral_examples():
    assert pairing(ind((0, 2)), ind((1, 3))) == 1
    assert integral(ind((0, 1)) - ind((1, 2))) == 0
    sq = ind((0, 1), (0, 1))
    assert pairing(sq, sq) == 1


def test_pairing_dimension_mismatch():
    with pytest.raises(ValueError):
        pairing(ind((0, 1)), ind((0, 1), (0, 1)))


def test_average_examples():
    assert average(ind((0, 1)), cube(Z, -1, (0,))) == Fraction(1, 2)
    assert average(ind((0, 1)), cube(Z, 0, (4,))) == 0
    f = ind((0, D(1, 1)), coeff=3) - ind((D(1, 1), 1))
    assert average(f, cube(Z, 0, (0,))) == 1


def test_E_F_examples():
    assert E_op(ind((0, 1)), -1, Z).equals(ind((0, 2), coeff=Fraction(1, 2)))
    f = ind((0, 1), coeff=2) + ind((1, 3), coeff=-1)
    assert E_op(f, 0, Z).equals(f)
    assert F_op(ind((0, 1)), 0, Z).is_zero


def test_D_op_examples():
    P = cube(Z, -1, (0,))
    got = D_op(ind((0, 1)), P)
    want = ind((0, 1), coeff=Fraction(1, 2)) - ind((1, 2), coeff=Fraction(1, 2))
    assert got.equals(want)
    assert D_op(SimpleFunction.of_cube(P), P).is_zero


def test_D_pq_examples():
    P, Q = cube(Z, 0, (0,)), cube(Z, 0, (1,))
    assert D_pq(ind((0, 1)), P, P).is_zero
    assert D_pq(ind((0, 1)), P, Q).equals(ind((0, 1)))
    assert D_pq(ind((0, 2), coeff=5), P, Q).is_zero
    with pytest.raises(ValueError):
        D_pq(ind((0, 1)), P, cube(Z, 1, (0,)))


def test_D_block_examples():
    S = cube(Z, -1, (0,))
    f = ind((0, 1))
    assert D_block_upto(f, S, 0).is_zero
    want = D_op(f, cube(Z, 0, (0,))) + D_op(f, cube(Z, 0, (1,)))
    assert D_block(f, S, 1).equals(want)
    g = ind((0, D(1, 1)), coeff=2) + ind((D(3, 1), 2), coeff=-1)
    assert E_block(g, S, 2).equals(g)
    assert E_block(g, S, 1).equals(ind((0, 1)) - ind((1, 2), coeff=Fraction(1, 2)))


@given(simple_functions(), thetas(), st.integers(-3, 2), st.integers(1, 4))
def test_telescoping(f, th, a, n):
    b = a + n
    lhs = E_op(f, b, th) - E_op(f, a, th)
    rhs = SimpleFunction.zero(1)
    for i in range(a, b):
        rhs = rhs + D_gen(f, i, th)
    assert lhs.equals(rhs)


@given(simple_functions(), thetas(), st.integers(-3, 3), st.integers(0, 3))
def test_projection_coarser_wins(f, th, g0, dk):
    g1 = g0 - dk
    assert E_op(E_op(f, g0, th), g1, th).equals(E_op(f, g1, th))
    assert E_op(E_op(f, g1, th), g0, th).equals(E_op(f, g1, th))


@given(simple_functions(d=2, max_terms=2), thetas(d=2, window=(-6, 4)), st.integers(-1, 2), st.integers(0, 2))
def test_orthogonality_and_mean_zero(f, th, gen, up):
    for P in cubes_meeting(f.bbox(), gen, th)[:6]:
        DP = D_op(f, P)
        assert DP.integral() == 0
        Q = P
        for _ in range(up):
            from dyadrep.grid import parent
            Q = parent(Q)
        assert pairing(DP, SimpleFunction.of_cube(Q)) == 0


@given(simple_functions(), thetas(), st.integers(-2, 3))
def test_rerepresentation_independence(f, th, gen):
    # split every rectangle into two halves
    terms = []
    for r, c in f.terms:
        (lo, hi), = r.bounds
        mid = (lo + hi) * D(1, 1)
        terms += [(Rect(((lo, mid),)), c), (Rect(((mid, hi),)), c)]
    g = SimpleFunction(1, terms)
    assert g.equals(f)
    assert E_op(g, gen, th).equals(E_op(f, gen, th))
    assert D_gen(g, gen, th).equals(D_gen(f, gen, th))
    assert F_op(g, gen, th).equals(F_op(f, gen, th))


@given(simple_functions(d=2, max_terms=2), thetas(d=2, window=(-6, 4)), st.integers(-2, 2))
def test_D_block_identity(f, th, k):
    S = cube(th, -2, (0, 0))
    k = abs(k)
    lhs = D_block_upto(f, S, k)
    rhs = SimpleFunction.zero(2)
    for j in range(k):
        rhs = rhs + D_block(f, S, j)
    assert lhs.equals(rhs)
    assert lhs.equals(E_block(f, S, k) - E_block(f, S, 0))


@given(simple_functions(d=2))
def test_json_round_trip(f):
    g = SimpleFunction.from_json(f.to_json())
    assert g.to_json() == f.to_json()
    assert g.equals(f)


def test_outputs_stay_dyadic():
    th = ShiftSequence.from_bits(1, -6, 6, {1: 1, 3: 1, -2: 1})
    f = ind((D(-3, 2), D(5, 3)), coeff=Fraction(7, 3))
    for r, c in E_op(f, 2, th).terms:
        for lo, hi in r.bounds:
            assert isinstance(lo, DyadicRational) and isinstance(hi, DyadicRational)
        assert isinstance(c, Fraction)
