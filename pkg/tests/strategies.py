"""Hypothesis strategies shared by the test modules."""

from hypothesis import strategies as st

from dyadrep.grid import DyadicRational, ShiftSequence
from dyadrep.simplefn import Rect, SimpleFunction


@st.composite
def intervals(draw, span=4, resolution=3):
    scale = 1 << resolution
    a = draw(st.integers(-span * scale // 2, span * scale // 2 - 1))
    b = draw(st.integers(a + 1, span * scale // 2))
    return DyadicRational(a, resolution), DyadicRational(b, resolution)


@st.composite
def simple_functions(draw, d=1, max_terms=3, span=4, resolution=3):
    n = draw(st.integers(1, max_terms))
    terms = []
    for _ in range(n):
        rect = Rect(tuple(draw(intervals(span, resolution)) for _ in range(d)))
        coeff = draw(st.integers(-3, 3).filter(bool))
        terms.append((rect, coeff))
    return SimpleFunction(d, terms)


@st.composite
def thetas(draw, d=1, window=(-10, 6)):
    j_lo, j_hi = window
    bits = tuple(tuple(draw(st.integers(0, 1)) for _ in range(d)) for _ in range(j_hi - j_lo + 1))
    return ShiftSequence(d, j_lo, j_hi, bits)
