import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dyadrep.bcr import main_term
from dyadrep.engine import GAMMAS, LatticeEngine
from dyadrep.form import WeakForm, make_form
from dyadrep.grid import ShiftSequence, sample_theta, window_for
from dyadrep.kernel import ZERO_MODULUS, HilbertKernel
from dyadrep.rep import (GoodnessIndicator, averaging_table, delta_exponent, diag_term, haar_multiplier, horizon,
                         mc_expect, normalization, offdiag_block, offdiag_tail, paraproduct, paraproduct_adj,
                         representation_check, shift_block, shift_form, shift_norm_probe, shift_sum, size_ratio,
                         split_report)
from dyadrep.simplefn import D_block, D_block_upto, SimpleFunction

from strategies import simple_functions, thetas

ind = SimpleFunction.indicator
F, G = ind((0, 1)), ind((2, 3))
TH = ShiftSequence.from_bits(1, -12, 14, {-2: 1, 0: 1, 1: 1, 3: 1, 4: 1})


@settings(max_examples=15)
@given(simple_functions(max_terms=2), simple_functions(max_terms=2), thetas(window=(-8, 6)),
       st.integers(-3, 1), st.integers(1, 3))
def test_split_identity(f, g, th, a, n):
    form = make_form("hilbert")
    rep = split_report(form, f, g, a, a + n, th)
    assert rep.defect <= 1e-12 * max(1.0, abs(rep.main))


def test_split_identity_planar(power2):
    f = ind((0, 1), (0, 1)) - ind((0, 1), (1, 2), coeff=2)
    g = ind((2, 3), (0, 1))
    th = sample_theta(5, 2, (-8, 6))
    rep = split_report(power2, f, g, -2, 1, th)
    assert rep.defect <= 1e-12


def test_horizon_bands(hilbert):
    a, b = -2, 2
    ks = horizon(F, G, b)
    assert offdiag_block(hilbert, F, G, a, b, TH, (1, 1), ks + 1) == 0.0
    assert offdiag_tail(hilbert, F, G, a, b, TH, ks + 1)[(1, 1)] == 0.0
    # the one-sided types keep a tail past the horizon when some P carries both supports:
    # -<g>_P tau(D_P f, 1_Q) is not localized in Q
    Z = ShiftSequence.zero(1, -12, 14)
    assert offdiag_block(hilbert, F, G, a, b, Z, (1, 0), ks + 1) != 0.0
    assert abs(offdiag_tail(hilbert, F, G, a, b, Z, ks + 1)[(1, 0)]) > 1e-4


def test_diag_regrouping(hilbert, power2):
    for form, f, g in ((hilbert, F - ind((1, 2)), G), (power2, ind((0, 1), (0, 1)), ind((1, 3), (0, 1)))):
        th = sample_theta(3, f.d, (-8, 6))
        parts = [haar_multiplier(form, f, g, -2, 2, th), paraproduct(form, f, g, -2, 2, th),
                 paraproduct_adj(form, f, g, -2, 2, th)]
        assert diag_term(form, f, g, -2, 2, th) == pytest.approx(math.fsum(parts), abs=1e-15)
        assert parts[1] == 0.0 and parts[2] == 0.0
    assert diag_term(hilbert, SimpleFunction.zero(1), G, -2, 2, TH) == 0.0


def test_haar_multiplier_vanishes_for_coarse_constants(hilbert):
    Z = ShiftSequence.zero(1, -8, 8)
    assert haar_multiplier(hilbert, ind((0, 4)), ind((-1, 3)), -2, 3, Z) == 0.0


def test_paraproducts_generic_path(hilbert):
    # the full T(1) evaluation (no fast path) reproduces the zero paraproducts
    slow = WeakForm(HilbertKernel())
    slow.kernel.t1_vanishes = False
    f = ind((0, 1)) - ind((1, 2))
    val = paraproduct(slow, f, G, -1, 1, TH) + paraproduct_adj(slow, f, G, -1, 1, TH)
    assert abs(val) <= 1e-6


def test_normalization():
    form = make_form("hilbert")
    assert normalization(form, 3) == pytest.approx(2 / (4 * 2.0**-3))
    assert normalization(form, 3, "unscaled") == pytest.approx(1 / (4 * 2.0**-3))
    with pytest.raises(ValueError, match="degenerate modulus"):
        normalization(WeakForm(_zero_kernel()), 3)
    with pytest.raises(ValueError):
        normalization(form, 3, "other")


def _zero_kernel():
    k = HilbertKernel()
    k.modulus = ZERO_MODULUS
    return k


@pytest.mark.parametrize("gamma", GAMMAS)
def test_shift_sum_is_sum_of_shift_forms(hilbert, gamma):
    for k in (2, 3):
        blk = shift_block(hilbert, F, G, -2, 2, gamma, k, TH)
        assert blk.total == pytest.approx(shift_sum(hilbert, F, G, -2, 2, gamma, k, TH), abs=1e-12)


def _busy_shifts(form, f, g, gamma, k):
    blk = shift_block(form, f, g, -2, 2, gamma, k, TH)
    return [S for S, v in blk.values.items() if v != 0]


@pytest.mark.parametrize("gamma", GAMMAS)
def test_cancellation_conditions(hilbert, gamma):
    f = F - ind((1, 2), coeff=2) + ind((-1, 0))
    g = G - ind((1, 2))
    k = 3
    shifts = _busy_shifts(hilbert, f, g, gamma, k)
    assert shifts
    for S in shifts:
        val = shift_form(hilbert, f, g, S, gamma, k, TH)
        ff = D_block(f, S, k) if gamma[0] else D_block_upto(f, S, k)
        gg = D_block(g, S, k) if gamma[1] else D_block_upto(g, S, k)
        assert shift_form(hilbert, ff, gg, S, gamma, k, TH) == pytest.approx(val, abs=1e-12)


def test_shift_form_without_good_cubes(hilbert):
    S = next(iter(shift_block(hilbert, F, G, -2, 2, (1, 1), 2, TH).values))
    far = ind((100, 101))
    assert shift_form(hilbert, far, far, S, (1, 1), 2, TH) == 0.0
    with pytest.raises(ValueError):
        shift_form(hilbert, F, G, S, (1, 1), 1, TH)


def test_size_ratio_finite(hilbert, rng):
    from dyadrep.simplefn import random_simple_function
    vals = []
    for s in range(10):
        f = random_simple_function(rng, 1, 3, span=4, resolution=3)
        g = random_simple_function(rng, 1, 3, span=4, resolution=3)
        th = sample_theta(s, 1, (-10, 8))
        for S in shift_block(hilbert, f, g, -1, 2, (1, 1), 3, th).values:
            r = size_ratio(hilbert, f, g, S, 3)
            if math.isfinite(r):
                vals.append(r)
    assert vals and max(vals) < 1e3


def test_mc_expect_examples():
    const = mc_expect(lambda th: 2.5, 1, 50)
    assert const.mean == 2.5 and const.stderr == 0.0
    ind_ = GoodnessIndicator(0, (0,), 3)
    est = mc_expect(ind_, 11, 2000)
    assert abs(est.mean - 0.5) <= 3 * est.stderr
    est2 = mc_expect(GoodnessIndicator(0, (0, 0), 2), 12, 2000, d=2)
    assert abs(est2.mean - 0.25) <= 3 * est2.stderr
    big = mc_expect(ind_, 11, 4000)
    assert 0.8 / math.sqrt(2) <= big.stderr / est.stderr <= 1.2 / math.sqrt(2)
    with pytest.raises(ValueError):
        mc_expect(ind_, 1, 0)


def test_mc_expect_thread_invariant():
    fn = GoodnessIndicator(-1, (1,), 2)
    one = mc_expect(fn, 5, 64)
    many = mc_expect(fn, 5, 64, threads=2)
    assert np.array_equal(one.values, many.values)


def test_averaging_small(hilbert):
    rows = averaging_table(hilbert, F, G, -3, 3, GAMMAS, [2, 3], 400, 9)
    assert all(r.passed for r in rows)


def test_averaging_beyond_horizon(hilbert):
    k = horizon(F, G, 2) + 1
    row = averaging_table(hilbert, F, G, -2, 2, [(1, 1)], [k], 50, 3)[0]
    assert row.lhs == 0.0 and row.rhs == 0.0 and row.passed


def test_representation_edge_cases(hilbert):
    zero = representation_check(hilbert, SimpleFunction.zero(1), G, -2, 4, 6, 10, 1)
    assert zero["estimate"] == 0.0 and zero["stderr"] == 0.0 and zero["verdict"] == "PASS"
    same = representation_check(hilbert, F, F, -2, 4, 6, 100, 1)
    assert abs(same["estimate"]) <= 3 * same["stderr"] + 1e-12


def test_k_series_converges(hilbert):
    # sum over gamma of the band-k contribution, against the modulus weight
    K = 12
    eng = LatticeEngine(hilbert.kernel, F, G, -3, 4, K)
    th = sample_theta(2, 1, window_for(-3, 4, K))
    res = eng.evaluate(th)
    w = np.array([hilbert.kernel.modulus(2.0**-k) for k in range(2, K + 1)])
    per_k = np.abs(res.raw[:, 2:]).sum(axis=0)
    tails = np.cumsum(per_k[::-1])[::-1]
    assert np.all(np.diff(tails) <= 0)
    assert np.max(per_k / w) < 10 * np.max(per_k[:3] / w[:3])


def test_shift_norm_probe(hilbert):
    rows = shift_norm_probe(hilbert, (1, 1), [2, 4, 8, 16, 32], samples=4, seed=1)
    ok = [r for r in rows if r["status"] == "ok"]
    assert ok[0]["normalized"] == pytest.approx(1.0)
    assert all(r["delta"] == 0.5 for r in rows)
    assert rows[-1]["status"].startswith("skipped")
    assert delta_exponent((1, 0), 4) == 0.5 and delta_exponent((1, 0), 1.5) == pytest.approx(2 / 3)
