import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadrep.form import (make_form, random_swbp_samples, swbp_probe, tau, tau_D1, tau_one, tau_one_left,
                          wbp_probe, weak_continuity_values)
from dyadrep.grid import DyadicRational as D
from dyadrep.grid import ShiftSequence, cube
from dyadrep.kernel import GenericKernel, OverlapRuleUnavailable, PowerModulus
from dyadrep.form import WeakForm
from dyadrep.simplefn import Rect, SimpleFunction, D_op

from strategies import simple_functions

ind = SimpleFunction.indicator
STANDARD = 3 * math.log(3) - 4 * math.log(2)
H_MEANZERO = ind((0, 1)) - ind((1, 2))


def test_tau_examples(hilbert):
    assert tau(hilbert, ind((0, 1)), ind((2, 3))) == pytest.approx(STANDARD, abs=1e-14)
    assert tau(hilbert, SimpleFunction.zero(1), ind((2, 3))) == 0.0
    with pytest.raises(ValueError):
        tau(hilbert, ind((0, 1), (0, 1)), ind((2, 3)))


def test_overlap_rule_propagates():
    form = WeakForm(GenericKernel(1, lambda x, y: 1 / (x - y)[..., 0], 1.0, PowerModulus(4, 1)))
    with pytest.raises(OverlapRuleUnavailable):
        tau(form, ind((0, 2)), ind((1, 3)))


def split(f):
    terms = []
    for r, c in f.terms:
        (lo, hi), *rest = r.bounds
        mid = (lo + hi) * D(1, 1)
        terms += [(Rect(((lo, mid), *rest)), c), (Rect(((mid, hi), *rest)), c)]
    return SimpleFunction(f.d, terms)


@given(simple_functions(), simple_functions())
def test_rerepresentation_and_antisymmetry(f, g):
    form = make_form("hilbert")
    v = tau(form, f, g)
    assert abs(tau(form, split(f), split(g)) - v) <= 1e-12 * max(1.0, abs(v))
    assert abs(tau(form, g, f) + v) <= 1e-9


@given(simple_functions(d=2, max_terms=2), simple_functions(d=2, max_terms=2))
def test_rerepresentation_planar(f, g):
    form = make_form("power:0.5")
    v = tau(form, f, g)
    assert abs(tau(form, split(f), g) - v) <= 1e-12 * max(1.0, abs(v))


@given(simple_functions(), simple_functions(), simple_functions(), st.integers(-3, 3))
def test_bilinearity(f1, f2, g, c):
    form = make_form("hilbert")
    lhs = tau(form, f1 * c + f2, g)
    rhs = c * tau(form, f1, g) + tau(form, f2, g)
    assert abs(lhs - rhs) <= 1e-11 * max(1.0, abs(lhs))


def test_tau_one_examples(hilbert):
    assert abs(tau_one(hilbert, H_MEANZERO, Rect(((D(0), D(2)),)))) <= 1e-6
    assert tau_one(hilbert, SimpleFunction.zero(1), Rect(((D(0), D(2)),))) == 0.0
    with pytest.raises(ValueError):
        tau_one(hilbert, ind((0, 1)), Rect(((D(0), D(2)),)))
    with pytest.raises(ValueError):
        tau_one(hilbert, H_MEANZERO, Rect(((D(0), D(1)),)))


def test_tau_one_cube_independence(hilbert):
    h = ind((0, 1), coeff=3) - ind((1, D(3, 1)), coeff=4) - ind((D(3, 1), 2), coeff=2)
    assert h.integral() == 0
    cubes = [Rect(((D(0), D(2)),)), Rect(((D(-2), D(2)),)), Rect(((D(-6), D(2)),))]
    vals = [tau_one(hilbert, h, Q) for Q in cubes]
    left = [tau_one_left(hilbert, h, Q) for Q in cubes]
    assert max(vals) - min(vals) <= 1e-6
    assert max(left) - min(left) <= 1e-6
    assert max(abs(v) for v in vals + left) <= 1e-6
    assert tau_one(hilbert, h, cubes[0], fast=True) == 0.0


def test_tau_one_planar_cube_independence(power2):
    h = ind((0, 1), (0, 1)) - ind((1, 2), (0, D(1, 1)), coeff=2)
    cubes = [Rect(((D(0), D(2)), (D(0), D(2)))), Rect(((D(-2), D(2)), (D(-2), D(2)))),
             Rect(((D(0), D(4)), (D(0), D(4))))]
    vals = [tau_one(power2, h, Q) for Q in cubes]
    assert max(vals) - min(vals) <= 1e-6
    # the planar odd kernel also has T(1) = 0
    assert max(abs(v) for v in vals) <= 1e-6


def test_tau_D1_agrees_with_tau_one_left(hilbert):
    th = ShiftSequence.from_bits(1, -6, 6, {0: 1, -1: 1})
    f = ind((0, 1)) + ind((D(1, 2), D(5, 2)), coeff=-2)
    P = cube(th, -1, (0,))
    res = tau_D1(hilbert, f, P)
    want = tau_one_left(hilbert, D_op(f, P), P)
    assert abs(res.value - want) <= 1e-6
    assert res.constant > 0 and math.isfinite(res.constant)
    zero = tau_D1(hilbert, SimpleFunction.zero(1), P)
    assert zero.value == 0.0


def test_wbp_swbp(hilbert, rng):
    Z = ShiftSequence.zero(1, -6, 6)
    assert wbp_probe(hilbert, [cube(Z, g, (i,)) for g in range(-2, 3) for i in range(-3, 3)]) == 0.0
    assert wbp_probe(hilbert, []) == 0.0
    assert swbp_probe(hilbert, []) == 0.0
    R, S, Q = ((D(0), D(1)),), ((D(1), D(2)),), ((D(0), D(2)),)
    assert swbp_probe(hilbert, [(R, S, Q)]) == pytest.approx(math.log(2), abs=1e-14)
    val = swbp_probe(hilbert, random_swbp_samples(rng, 1, 50))
    assert math.isfinite(val)
    with pytest.raises(ValueError):
        swbp_probe(hilbert, [(((D(0), D(3)),), S, Q)])


def test_weak_continuity(hilbert, rng):
    z = rng.uniform(-10, 10, (100, 1))
    vals = weak_continuity_values(hilbert, ((D(0), D(1)),), z)
    assert np.all(vals == 0.0)
