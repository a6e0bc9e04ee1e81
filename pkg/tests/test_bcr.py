import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dyadrep.bcr import (DECAY_COLUMNS, bcr_report, decay_scan, error_term, fit_log2_slope, main_term,
                         symmetric_decay)
from dyadrep.form import make_form, tau
from dyadrep.grid import ShiftSequence
from dyadrep.simplefn import E_op, SimpleFunction

from strategies import simple_functions, thetas

ind = SimpleFunction.indicator
F, G = ind((0, 1)), ind((2, 3))
Z = ShiftSequence.zero(1, -12, 12)


@given(simple_functions(), simple_functions(), thetas(window=(-8, 6)), st.integers(-6, 4), st.integers(1, 6))
def test_identity_hilbert(f, g, th, a, n):
    b = min(a + n, 5)
    if a >= b:
        return
    rep = bcr_report(make_form("hilbert"), f, g, a, b, th)
    assert rep.defect <= 1e-12 * max(1.0, abs(rep.reference))
    assert rep.path_gap <= 1e-9


@given(simple_functions(d=2, max_terms=2), thetas(d=2, window=(-5, 4)), st.integers(-3, 1), st.integers(1, 3))
def test_identity_planar(f, th, a, n):
    # g placed to the right of every f support keeps the pairings disjoint
    g = ind((3, 4), (0, 1)) - ind((4, 5), (-1, 0), coeff=2)
    rep = bcr_report(make_form("power:0.5"), f, g, a, a + n, th)
    assert rep.defect <= 1e-8 * max(1.0, abs(rep.reference))


def test_standard_pair_zero_theta(hilbert):
    rep = bcr_report(hilbert, F, G, -2, 3, Z)
    assert rep.main == pytest.approx(tau(hilbert, F, G) - rep.error, abs=1e-12)


def test_empty_range(hilbert):
    assert main_term(hilbert, F, G, 2, 2, Z) == 0.0
    with pytest.raises(ValueError):
        main_term(hilbert, F, G, 3, 2, Z)


def test_linearity(hilbert):
    th = ShiftSequence.from_bits(1, -12, 12, {-3: 1, 0: 1, 2: 1})
    one = main_term(hilbert, F, G, -3, 4, th)
    two = main_term(hilbert, F * 2, G, -3, 4, th)
    assert abs(two - 2 * one) <= 1e-12


def test_fine_terms_vanish_for_measurable_inputs(hilbert):
    err = error_term(hilbert, F, G, -4, 2, Z)
    assert err.fine1 == 0.0 and err.fine2 == 0.0
    assert err.path_a == err.coarse


def test_coarse_term_scales_like_two_to_the_a(hilbert):
    # an unshifted grid puts both cubes in one ancestor (coarse term exactly zero), so shift it
    th = ShiftSequence.from_bits(1, -12, 12, {j: 1 for j in range(-12, 0, 2)})
    vals = [abs(tau(hilbert, E_op(F, a, th), E_op(G, a, th))) for a in range(-10, -3)]
    ratios = [vals[i] * 2.0 ** -(a) for i, a in enumerate(range(-10, -3))]
    assert max(ratios) <= 4 * math.e


def test_symmetric_decay(hilbert):
    th = ShiftSequence.from_bits(1, -12, 12, {-1: 1, -4: 1, 3: 1, 6: 1})
    errs = symmetric_decay(hilbert, F, G, range(1, 9), th)
    assert errs[-1] < 1e-2 * abs(tau(hilbert, F, G))
    assert errs[-1] < errs[2]


def test_zero_input_table(hilbert):
    table = decay_scan(hilbert, SimpleFunction.zero(1), G, [-4, -3], [1, 2], Z)
    for row in table.as_rows():
        assert all(v == 0 for v in row[2:6])
    assert len(table.as_rows()[0]) == len(DECAY_COLUMNS)


def test_fit_log2_slope():
    xs = np.arange(1, 8)
    assert fit_log2_slope(xs, 2.0 ** -xs) == pytest.approx(-1)
    assert math.isnan(fit_log2_slope([1, 2], [0, 0]))


def test_separating_theta(hilbert):
    from dyadrep.bcr import separating_theta
    th = separating_theta(F, G, -9, (-10, 30))
    coarse = [abs(tau(hilbert, E_op(F, a, th), E_op(G, a, th))) for a in range(-9, -1)]
    # adjacent cubes of side 2^-a carrying averages 2^a: 2 ln 2 * 2^a exactly
    for a, v in zip(range(-9, -1), coarse):
        assert v == pytest.approx(2 * math.log(2) * 2.0**a, rel=1e-9)
    # fine grids cut the unit edges
    assert error_term(hilbert, F, G, -2, 3, th).fine1 != 0.0
    assert separating_theta(F, ind((1, 2)) + ind((-1, 0)), -5, (-6, 10)) is None
    assert separating_theta(SimpleFunction.zero(1), G, -5, (-6, 10)) is None
