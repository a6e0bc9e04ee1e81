"""Finite linear combinations of rectangle indicators with exact arithmetic.

Endpoints are :class:`~dyadrep.grid.DyadicRational`, coefficients are
:class:`fractions.Fraction`.  The martingale operators (conditional
expectations, differences, residuals) map this class to itself exactly.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .grid import (
    DyadicCube,
    DyadicRational,
    ShiftSequence,
    children,
    dyadic,
    shift_offset,
)


@dataclass(frozen=True)
class Rect:
    """Axis-parallel product of half-open intervals ``[lo_j, hi_j)``."""

    bounds: tuple

    def __post_init__(self):
        b = tuple((dyadic(lo), dyadic(hi)) for lo, hi in self.bounds)
        object.__setattr__(self, "bounds", b)

    @classmethod
    def of(cls, *intervals) -> "Rect":
        return cls(tuple(intervals))

    @classmethod
    def from_cube(cls, q: DyadicCube) -> "Rect":
        return cls(q.bounds)

    @property
    def d(self) -> int:
        return len(self.bounds)

    @property
    def is_empty(self) -> bool:
        return any(not lo < hi for lo, hi in self.bounds)

    @property
    def measure(self) -> DyadicRational:
        if self.is_empty:
            return DyadicRational(0)
        out = DyadicRational(1)
        for lo, hi in self.bounds:
            out = out * (hi - lo)
        return out

    def intersect(self, other: "Rect") -> "Rect":
        return Rect(tuple((max(a, c), min(b, e)) for (a, b), (c, e) in zip(self.bounds, other.bounds)))

    def overlap(self, other: "Rect") -> DyadicRational:
        out = DyadicRational(1)
        for (a, b), (c, e) in zip(self.bounds, other.bounds):
            w = min(b, e) - max(a, c)
            if not w > 0:
                return DyadicRational(0)
            out = out * w
        return out

    def contains(self, other: "Rect") -> bool:
        return all(a <= c and e <= b for (a, b), (c, e) in zip(self.bounds, other.bounds))

    def as_floats(self) -> list:
        return [(float(lo), float(hi)) for lo, hi in self.bounds]

    def __repr__(self):
        return "Rect(" + " x ".join(f"[{lo},{hi})" for lo, hi in self.bounds) + ")"


def _coerce_coeff(c) -> Fraction:
    if isinstance(c, DyadicRational):
        return c.to_fraction()
    if isinstance(c, str):
        return Fraction(c)
    return Fraction(c)


class SimpleFunction:
    """``sum_i c_i 1_{R_i}``; the empty list is the zero function."""

    __slots__ = ("d", "terms")

    def __init__(self, d: int, terms: Iterable = ()):
        self.d = int(d)
        out = []
        for rect, c in terms:
            if not isinstance(rect, Rect):
                rect = Rect(tuple(rect))
            if rect.d != self.d:
                raise ValueError("rectangle dimension mismatch")
            c = _coerce_coeff(c)
            if c != 0 and not rect.is_empty:
                out.append((rect, c))
        self.terms = tuple(out)

    @classmethod
    def indicator(cls, *intervals, coeff=1) -> "SimpleFunction":
        r = Rect(tuple(intervals))
        return cls(r.d, [(r, coeff)])

    @classmethod
    def of_cube(cls, q: DyadicCube, coeff=1) -> "SimpleFunction":
        return cls(q.d, [(Rect.from_cube(q), coeff)])

    @classmethod
    def zero(cls, d: int) -> "SimpleFunction":
        return cls(d, ())

    def __repr__(self):
        body = " + ".join(f"{c}*1{r!r}" for r, c in self.terms) or "0"
        return f"SimpleFunction(d={self.d}: {body})"

    def __len__(self):
        return len(self.terms)

    def _check(self, other: "SimpleFunction"):
        if self.d != other.d:
            raise ValueError(f"dimension mismatch: {self.d} vs {other.d}")

    def __add__(self, other: "SimpleFunction") -> "SimpleFunction":
        self._check(other)
        return SimpleFunction(self.d, self.terms + other.terms)

    def __neg__(self) -> "SimpleFunction":
        return SimpleFunction(self.d, [(r, -c) for r, c in self.terms])

    def __sub__(self, other: "SimpleFunction") -> "SimpleFunction":
        return self + (-other)

    def __mul__(self, s) -> "SimpleFunction":
        s = _coerce_coeff(s)
        return SimpleFunction(self.d, [(r, c * s) for r, c in self.terms])

    __rmul__ = __mul__

    @property
    def is_zero(self) -> bool:
        return not self.normalize().terms

    def bbox(self) -> Rect | None:
        if not self.terms:
            return None
        bounds = []
        for j in range(self.d):
            lo = min(r.bounds[j][0] for r, _ in self.terms)
            hi = max(r.bounds[j][1] for r, _ in self.terms)
            bounds.append((lo, hi))
        return Rect(tuple(bounds))

    def restrict(self, rect: Rect) -> "SimpleFunction":
        """``f * 1_rect``."""
        return SimpleFunction(self.d, [(r.intersect(rect), c) for r, c in self.terms])

    # --- exact normal form -------------------------------------------------

    def _cells(self):
        axes = []
        for j in range(self.d):
            pts = sorted({e for r, _ in self.terms for e in r.bounds[j]})
            axes.append(pts)
        shape = tuple(max(len(p) - 1, 0) for p in axes)
        vals = np.empty(shape, dtype=object)
        vals.fill(Fraction(0))
        pos = [{p: i for i, p in enumerate(pts)} for pts in axes]
        for r, c in self.terms:
            sl = tuple(slice(pos[j][r.bounds[j][0]], pos[j][r.bounds[j][1]]) for j in range(self.d))
            vals[sl] = vals[sl] + c
        return axes, vals

    def normalize(self) -> "SimpleFunction":
        """Canonical disjoint representation (maximal merges along each axis).

        Two functions are equal almost everywhere iff their normal forms agree.
        """
        if not self.terms:
            return self
        axes, vals = self._cells()
        pieces = _merge(axes, vals)
        return SimpleFunction(self.d, [(Rect(tuple(b)), c) for b, c in pieces])

    def equals(self, other: "SimpleFunction") -> bool:
        self._check(other)
        return not (self - other).normalize().terms

    def abs(self) -> "SimpleFunction":
        n = self.normalize()
        return SimpleFunction(self.d, [(r, abs(c)) for r, c in n.terms])

    # --- integrals ------------------------------------------------------------

    def integral(self) -> Fraction:
        return sum((c * r.measure.to_fraction() for r, c in self.terms), Fraction(0))

    def l1_norm(self) -> Fraction:
        return self.abs().integral()

    def l2_norm(self) -> float:
        n = self.normalize()
        return float(sum((c * c * r.measure.to_fraction() for r, c in n.terms), Fraction(0))) ** 0.5

    def lp_norm(self, p: float) -> float:
        n = self.normalize()
        return sum(abs(float(c)) ** p * float(r.measure) for r, c in n.terms) ** (1.0 / p)

    def to_json(self) -> str:
        return json.dumps(to_dict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "SimpleFunction":
        return from_dict(json.loads(text))


def _merge(axes, vals):
    """Turn a cell array into maximal rectangles: merge equal runs on the last
    axis, then equal consecutive slabs on earlier axes."""
    d = len(axes)
    if d == 1:
        pts = axes[0]
        out = []
        i, n = 0, vals.shape[0]
        while i < n:
            c = vals[i]
            j = i + 1
            while j < n and vals[j] == c:
                j += 1
            if c != 0:
                out.append((((pts[i], pts[j]),), c))
            i = j
        return out
    pts = axes[0]
    slabs = [tuple(_merge(axes[1:], vals[i])) for i in range(vals.shape[0])]
    out = []
    i, n = 0, len(slabs)
    while i < n:
        j = i + 1
        while j < n and slabs[j] == slabs[i]:
            j += 1
        for b, c in slabs[i]:
            out.append((((pts[i], pts[j]),) + tuple(b), c))
        i = j
    return out


def to_dict(f: SimpleFunction) -> dict:
    return {
        "d": f.d,
        "terms": [
            {"rect": [[str(lo), str(hi)] for lo, hi in r.bounds], "coeff": f"{c.numerator}/{c.denominator}"}
            for r, c in f.terms
        ],
    }


def from_dict(obj: dict) -> SimpleFunction:
    d = int(obj["d"])
    terms = []
    for t in obj["terms"]:
        rect = Rect(tuple((DyadicRational.parse(lo), DyadicRational.parse(hi)) for lo, hi in t["rect"]))
        terms.append((rect, Fraction(t["coeff"])))
    return SimpleFunction(d, terms)


def integral(f: SimpleFunction) -> Fraction:
    return f.integral()


def pairing(f: SimpleFunction, g: SimpleFunction) -> Fraction:
    """``int f g`` exactly, by inclusion over term pairs."""
    f._check(g)
    total = Fraction(0)
    for r, c in f.terms:
        for s, e in g.terms:
            ov = r.overlap(s)
            if ov.mantissa:
                total += c * e * ov.to_fraction()
    return total


def average(f: SimpleFunction, q) -> Fraction:
    """Mean of ``f`` over a cube (or rectangle) ``q``."""
    rect = q if isinstance(q, Rect) else Rect.from_cube(q)
    vol = rect.measure.to_fraction()
    if vol == 0:
        raise ValueError("average over an empty set")
    total = Fraction(0)
    for r, c in f.terms:
        ov = r.overlap(rect)
        if ov.mantissa:
            total += c * ov.to_fraction()
    return total / vol


# --- conditional expectations ----------------------------------------------


def _axis_pieces(lo: DyadicRational, hi: DyadicRational, gen: int, off: DyadicRational):
    """Generation-``gen`` conditional expectation of ``1_[lo,hi)`` on one axis:
    a list of ``(cell_lo, cell_hi, weight)`` with the full-cell run merged."""
    side = DyadicRational(1, gen)
    m0 = (lo - off).scale2(gen).floor()
    m1 = (hi - off).scale2(gen).ceil()
    if m1 <= m0:
        return []
    cell = lambda m: off + side * m  # noqa: E731
    if m1 - m0 == 1:
        a = cell(m0)
        return [(a, a + side, ((hi - lo).scale2(gen)).to_fraction())]
    out = []
    a0 = cell(m0)
    first = (a0 + side - lo).scale2(gen).to_fraction()
    b0 = cell(m1 - 1)
    last = (hi - b0).scale2(gen).to_fraction()
    lo_run, hi_run = m0, m1
    if first == 1:
        pass
    else:
        out.append((a0, a0 + side, first))
        lo_run = m0 + 1
    tail = None
    if last != 1:
        tail = (b0, b0 + side, last)
        hi_run = m1 - 1
    if hi_run > lo_run:
        out.append((cell(lo_run), cell(hi_run), Fraction(1)))
    if tail is not None:
        out.append(tail)
    return out


def E_op(f: SimpleFunction, gen: int, theta: ShiftSequence, normalize: bool = True) -> SimpleFunction:
    """Conditional expectation onto generation-``gen`` cubes of ``theta``.

    Averages factor over axes, so each term maps to a tensor product of
    one-dimensional pieces; full-cell runs are kept merged.
    """
    off = shift_offset(theta, gen)
    terms = []
    for r, c in f.terms:
        per_axis = [_axis_pieces(lo, hi, gen, o) for (lo, hi), o in zip(r.bounds, off)]
        for combo in itertools.product(*per_axis):
            w = c
            bounds = []
            for lo, hi, wt in combo:
                w = w * wt
                bounds.append((lo, hi))
            terms.append((Rect(tuple(bounds)), w))
    out = SimpleFunction(f.d, terms)
    return out.normalize() if normalize else out


def F_op(f: SimpleFunction, gen: int, theta: ShiftSequence, normalize: bool = True) -> SimpleFunction:
    out = f - E_op(f, gen, theta, normalize=False)
    return out.normalize() if normalize else out


def D_gen(f: SimpleFunction, gen: int, theta: ShiftSequence, normalize: bool = True) -> SimpleFunction:
    """``E_{gen+1} f - E_gen f``."""
    out = E_op(f, gen + 1, theta, normalize=False) - E_op(f, gen, theta, normalize=False)
    return out.normalize() if normalize else out


def D_op(f: SimpleFunction, p: DyadicCube) -> SimpleFunction:
    """Martingale difference on one cube: children averages minus the parent average."""
    base = average(f, p)
    terms = [(Rect.from_cube(ch), average(f, ch) - base) for ch in children(p)]
    return SimpleFunction(p.d, terms)


def D_pq(f: SimpleFunction, p: DyadicCube, q: DyadicCube) -> SimpleFunction:
    """``(<f>_P - <f>_Q) 1_P`` for same-generation cubes."""
    if p.gen != q.gen:
        raise ValueError("D_pq needs cubes of the same generation")
    return SimpleFunction.of_cube(p, average(f, p) - average(f, q))


def E_block(f: SimpleFunction, s: DyadicCube, k: int) -> SimpleFunction:
    """``sum_{P^(k) = S} E_P f``: generation ``gen(S)+k`` expectation restricted to ``S``."""
    return E_op(f, s.gen + k, s.theta).restrict(Rect.from_cube(s)).normalize()


def D_block(f: SimpleFunction, s: DyadicCube, k: int) -> SimpleFunction:
    """``sum_{P^(k) = S} D_P f``."""
    return D_gen(f, s.gen + k, s.theta).restrict(Rect.from_cube(s)).normalize()


def D_block_upto(f: SimpleFunction, s: DyadicCube, k: int) -> SimpleFunction:
    """``sum_{j<k} D_S^(j) f = E_S^(k) f - E_S f``."""
    if k == 0:
        return SimpleFunction.zero(f.d)
    return (E_block(f, s, k) - E_block(f, s, 0)).normalize()


def cube_function(values: dict, d: int) -> SimpleFunction:
    """Build ``sum_Q v_Q 1_Q`` from a ``{DyadicCube: value}`` map."""
    return SimpleFunction(d, [(Rect.from_cube(q), v) for q, v in values.items()])


def random_simple_function(rng: np.random.Generator, d: int = 1, n_terms: int = 2, span: int = 4,
                           resolution: int = 3, max_coeff: int = 3) -> SimpleFunction:
    """Random element with dyadic endpoints in ``[-span/2, span/2)`` on a ``2**-resolution`` grid."""
    scale = 1 << resolution
    terms = []
    for _ in range(n_terms):
        bounds = []
        for _ in range(d):
            a, b = sorted(rng.choice(span * scale + 1, size=2, replace=False))
            lo = DyadicRational(int(a) - span * scale // 2, resolution)
            hi = DyadicRational(int(b) - span * scale // 2, resolution)
            bounds.append((lo, hi))
        c = int(rng.integers(1, max_coeff + 1)) * (1 if rng.random() < 0.5 else -1)
        terms.append((Rect(tuple(bounds)), c))
    return SimpleFunction(d, terms)


def floats_of(f: SimpleFunction):
    """``(lo, hi, coeff)`` float arrays of shapes ``(n, d)``, ``(n, d)``, ``(n,)``."""
    n = len(f.terms)
    lo = np.empty((n, f.d))
    hi = np.empty((n, f.d))
    c = np.empty(n)
    for i, (r, coef) in enumerate(f.terms):
        for j, (a, b) in enumerate(r.bounds):
            lo[i, j] = float(a)
            hi[i, j] = float(b)
        c[i] = float(coef)
    return lo, hi, c


def as_rects(items: Sequence) -> list:
    return [r if isinstance(r, Rect) else Rect(tuple(r)) for r in items]
