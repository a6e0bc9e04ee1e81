"""Finite BCR decomposition ``tau = tau_{a,b} + E_{a,b}`` and error-decay scans."""

from __future__ import annotations

import math
from fractions import Fraction
from dataclasses import asdict, dataclass

import numpy as np

from .form import WeakForm, tau
from .grid import ShiftSequence
from .simplefn import E_op, SimpleFunction


def _ladder(f: SimpleFunction, a: int, b: int, theta: ShiftSequence) -> dict:
    return {i: E_op(f, i, theta) for i in range(a, b + 1)}


def main_term(form: WeakForm, f: SimpleFunction, g: SimpleFunction, a: int, b: int,
              theta: ShiftSequence, ladders=None) -> float:
    """``sum_{i=a}^{b-1} tau(D_i f, D_i g) + tau(D_i f, E_i g) + tau(E_i f, D_i g)``."""
    if a > b:
        raise ValueError("need a <= b")
    if a == b:
        return 0.0
    Ef, Eg = ladders if ladders is not None else (_ladder(f, a, b, theta), _ladder(g, a, b, theta))
    parts = []
    for i in range(a, b):
        Df = (Ef[i + 1] - Ef[i]).normalize()
        Dg = (Eg[i + 1] - Eg[i]).normalize()
        parts.append(tau(form, Df, Dg))
        parts.append(tau(form, Df, Eg[i]))
        parts.append(tau(form, Ef[i], Dg))
    return math.fsum(parts)


@dataclass
class ErrorTerm:
    path_a: float
    path_b: float
    coarse: float
    fine1: float
    fine2: float

    @property
    def value(self) -> float:
        return self.path_b


def error_term(form: WeakForm, f: SimpleFunction, g: SimpleFunction, a: int, b: int,
               theta: ShiftSequence, reference: float | None = None, ladders=None) -> ErrorTerm:
    """Both evaluations of the error term.

    Path A: ``tau(E_a f, E_a g) + tau(F_b f, g) + tau(E_b f, F_b g)``.
    Path B: ``tau(E_a f, E_a g) + tau(f, g) - tau(E_b f, E_b g)``.
    """
    if ladders is not None:
        Eaf, Eag, Ebf, Ebg = ladders[0][a], ladders[1][a], ladders[0][b], ladders[1][b]
    else:
        Eaf, Eag = E_op(f, a, theta), E_op(g, a, theta)
        Ebf, Ebg = E_op(f, b, theta), E_op(g, b, theta)
    coarse = tau(form, Eaf, Eag)
    Fbf = (f - Ebf).normalize()
    Fbg = (g - Ebg).normalize()
    fine1 = tau(form, Fbf, g)
    fine2 = tau(form, Ebf, Fbg)
    ref = tau(form, f, g) if reference is None else reference
    path_b = math.fsum([coarse, ref, -tau(form, Ebf, Ebg)])
    return ErrorTerm(math.fsum([coarse, fine1, fine2]), path_b, coarse, fine1, fine2)


@dataclass
class BcrReport:
    a: int
    b: int
    main: float
    error: float
    error_path_a: float
    reconstruction: float
    reference: float
    defect: float
    path_gap: float

    def as_dict(self) -> dict:
        return asdict(self)


def bcr_report(form: WeakForm, f: SimpleFunction, g: SimpleFunction, a: int, b: int,
               theta: ShiftSequence) -> BcrReport:
    ladders = (_ladder(f, a, b, theta), _ladder(g, a, b, theta))
    ref = tau(form, f, g)
    main = main_term(form, f, g, a, b, theta, ladders)
    err = error_term(form, f, g, a, b, theta, reference=None, ladders=ladders)
    recon = main + err.path_a
    return BcrReport(a, b, main, err.path_b, err.path_a, recon, ref, abs(recon - ref), abs(err.path_a - err.path_b))


# --- decay scans ---------------------------------------------------------------------


DECAY_COLUMNS = ["a", "b", "E_total", "E_coarse", "E_fine1", "E_fine2", "slope_a", "slope_b"]


def fit_log2_slope(xs, ys, floor: float = 1e-300) -> float:
    """Least-squares slope of ``log2 |y|`` against ``x`` over entries with ``|y| > floor``."""
    xs = np.asarray(xs, dtype=float)
    ys = np.abs(np.asarray(ys, dtype=float))
    keep = ys > floor
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(xs[keep], np.log2(ys[keep]), 1)[0])


@dataclass
class DecayTable:
    rows: list
    slope_a: float
    slope_b: float

    def as_rows(self) -> list:
        return [[r[c] for c in DECAY_COLUMNS] for r in self.rows]


def decay_scan(form: WeakForm, f: SimpleFunction, g: SimpleFunction, a_list, b_list, thetas) -> DecayTable:
    """Error-term components over the grid ``a_list x b_list``.

    ``thetas`` is one shift sequence or a list; entries are means of absolute
    values over the list.  ``slope_a`` fits ``log2 |tau(E_a f, E_a g)|`` against
    ``a``; ``slope_b`` fits ``log2 |tau(F_b f, g) + tau(E_b f, F_b g)|`` against ``b``.
    """
    if isinstance(thetas, ShiftSequence):
        thetas = [thetas]
    a_list = sorted(a_list)
    b_list = sorted(b_list)
    coarse = {a: [] for a in a_list}
    fine = {b: [] for b in b_list}
    for th in thetas:
        for a in a_list:
            coarse[a].append((tau(form, E_op(f, a, th), E_op(g, a, th))))
        for b in b_list:
            Ebf, Ebg = E_op(f, b, th), E_op(g, b, th)
            f1 = tau(form, (f - Ebf).normalize(), g)
            f2 = tau(form, Ebf, (g - Ebg).normalize())
            fine[b].append((f1, f2))
    rows = []
    ca = {a: float(np.mean(np.abs(coarse[a]))) for a in a_list}
    fb = {b: float(np.mean([abs(x + y) for x, y in fine[b]])) for b in b_list}
    slope_a = fit_log2_slope(a_list, [ca[a] for a in a_list])
    slope_b = fit_log2_slope(b_list, [fb[b] for b in b_list])
    for a in a_list:
        for b in b_list:
            if a >= b:
                continue
            tot = [abs(c + x + y) for c, (x, y) in zip(coarse[a], fine[b])]
            rows.append({
                "a": a,
                "b": b,
                "E_total": float(np.mean(tot)),
                "E_coarse": ca[a],
                "E_fine1": float(np.mean([abs(x) for x, _ in fine[b]])),
                "E_fine2": float(np.mean([abs(y) for _, y in fine[b]])),
                "slope_a": slope_a,
                "slope_b": slope_b,
            })
    return DecayTable(rows, slope_a, slope_b)


def separating_theta(f: SimpleFunction, g: SimpleFunction, gen_lo: int, window: tuple) -> ShiftSequence | None:
    """A shift on which both error bounds are attained, or ``None`` if no axis
    separates the supports of ``f`` and ``g``.

    The bits ``j >= 1`` alternate (``theta_j = 1`` for odd ``j``), so integer
    points sit a third of the way into a cell at every generation ``>= 1``
    and the fine terms see every edge cut.  The bits in ``(gen_lo, 0]`` then
    put one generation-0 boundary, and with it a boundary of every generation
    ``>= gen_lo``, strictly between the supports, so ``tau(E_a f, E_a g)``
    pairs two adjacent cubes at every coarse ``a``.
    """
    fb, gb = f.bbox(), g.bbox()
    if fb is None or gb is None:
        return None
    j_lo, j_hi = window
    if j_lo > gen_lo or j_hi < 1:
        raise ValueError("window must cover gen_lo .. 1")
    fine = {j: 1 for j in range(1, j_hi + 1, 2)}
    delta = sum(Fraction(1, 2**j) for j in fine)
    for axis in range(f.d):
        (fl, fh), (gl, gh) = fb.bounds[axis], gb.bounds[axis]
        lo, hi = ((fh, gl) if fh <= gl else (gh, fl) if gh <= fl else (None, None))
        if lo is None:
            continue
        lo, hi = lo.to_fraction(), hi.to_fraction()
        m = math.floor(lo - delta) + 1
        if not m + delta < hi:
            continue
        units = m % (1 << -gen_lo) if gen_lo < 0 else 0
        bits = {}
        for j in range(j_lo, j_hi + 1):
            on = fine.get(j, 0) if j >= 1 else (j > gen_lo and (units >> -j) & 1)
            if on:
                vec = [0] * f.d
                vec[axis] = 1
                bits[j] = tuple(vec)
        return ShiftSequence.from_bits(f.d, j_lo, j_hi, bits)
    return None


def symmetric_decay(form: WeakForm, f: SimpleFunction, g: SimpleFunction, n_list, theta: ShiftSequence) -> list:
    """``|E_{-n,n}|`` (path B) for each ``n``."""
    ref = tau(form, f, g)
    return [abs(error_term(form, f, g, -n, n, theta, reference=ref).path_b) for n in n_list]
