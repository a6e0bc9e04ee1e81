"""The bilinear form ``tau`` on simple functions and its T(1) functionals."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import DyadicCube
from .kernel import Kernel
from .simplefn import D_op, Rect, SimpleFunction, floats_of

FAR_TOL = 1e-9


@dataclass
class WeakForm:
    """``tau(f, g) = sum_ij c_i d_j tau(1_{R_i}, 1_{S_j})`` for a kernel with
    (optionally) an overlap rule."""

    kernel: Kernel
    stats: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.kernel.d


def tau(form: WeakForm, f: SimpleFunction, g: SimpleFunction) -> float:
    if f.d != g.d or f.d != form.d:
        raise ValueError("dimension mismatch")
    if not f.terms or not g.terms:
        return 0.0
    fl, fh, fc = floats_of(f)
    gl, gh, gc = floats_of(g)
    nf, ng = len(fc), len(gc)
    rl = np.repeat(fl, ng, axis=0)
    rh = np.repeat(fh, ng, axis=0)
    sl = np.tile(gl, (nf, 1))
    sh = np.tile(gh, (nf, 1))
    vals = form.kernel.pair_many(rl, rh, sl, sh)
    w = np.repeat(fc, ng) * np.tile(gc, nf)
    return math.fsum(w * vals)


# --- far-field integrals ----------------------------------------------------------


def _ring_boxes(inner: float, outer: float, d: int, center):
    """Boxes tiling ``{inner <= |y - center|_inf < outer}``, each of side at most
    ``outer - inner`` (roughly cubes)."""
    out = []

    def rec(axis, prefix):
        if axis == d:
            return
        # slabs on this axis, full range on later axes, inner range on earlier ones
        for lo, hi in ((-outer, -inner), (inner, outer)):
            out.append(prefix + [(lo, hi)] + [(-outer, outer)] * (d - axis - 1))
        rec(axis + 1, prefix + [(-inner, inner)])

    rec(0, [])
    step = outer - inner
    boxes = []
    for b in out:
        cuts = []
        for lo, hi in b:
            n = max(1, int(round((hi - lo) / step)))
            edges = np.linspace(lo, hi, n + 1)
            cuts.append(list(zip(edges[:-1], edges[1:])))
        for combo in itertools.product(*cuts):
            boxes.append((np.array([c[0] for c in combo]) + center, np.array([c[1] for c in combo]) + center))
    return boxes


def _gauss_box(lo, hi, n):
    t, w = np.polynomial.legendre.leggauss(n)
    d = len(lo)
    pts1 = [(lo[j] + hi[j]) / 2 + (hi[j] - lo[j]) / 2 * t for j in range(d)]
    w1 = [(hi[j] - lo[j]) / 2 * w for j in range(d)]
    P = np.stack([g.ravel() for g in np.meshgrid(*pts1, indexing="ij")], axis=-1)
    W = np.ones(len(P))
    for g in np.meshgrid(*w1, indexing="ij"):
        W = W * g.ravel()
    return P, W


def _far_part(kern: Kernel, h: SimpleFunction, center, half: float, inner: float, moving: str,
              tol: float = FAR_TOL, n: int = 10):
    """``int_{|w - c| >= inner} int h(v) [K(.,.) - K(.,.)|_{v=c}] dv dw``.

    ``moving='first'``: ``h`` sits in the first kernel variable (``x``, the
    ``S``-side) and ``w = y``; ``moving='second'``: ``h`` sits in ``y`` and
    ``w = x``.  Shells double outward until the Dini tail bound
    ``||h||_1 d 2^d int_0^{half/rho} omega(u) du/u`` falls below ``tol``.
    Returns ``(value, tail_bound, abs_integral_bound)``.
    """
    d = h.d
    center = np.asarray(center, dtype=float)
    lo, hi, c = floats_of(h)
    l1 = float(h.l1_norm())
    if l1 == 0:
        return 0.0, 0.0, 0.0
    vparts = []
    for j in range(len(c)):
        P, W = _gauss_box(lo[j], hi[j], n)
        vparts.append((P, W * c[j]))
    VP = np.concatenate([p for p, _ in vparts])
    VW = np.concatenate([w for _, w in vparts])
    comps = []
    absb = 0.0
    r = inner
    shells = 0
    while True:
        tail = l1 * d * 2**d * kern.modulus.tail_integral(half / r)
        if tail < tol or shells > 200:
            break
        for blo, bhi in _ring_boxes(r, 2 * r, d, center):
            WP, WW = _gauss_box(blo, bhi, n)
            if moving == "first":
                x = VP[:, None, :]
                y = WP[None, :, :]
                vals = kern.value(x, y) - kern.value(np.broadcast_to(center, x.shape), y)
            else:
                y = VP[:, None, :]
                x = WP[None, :, :]
                vals = kern.value(x, y) - kern.value(x, np.broadcast_to(center, y.shape))
            contrib = VW @ vals @ WW
            comps.append(contrib)
            absb += abs(contrib)
        r *= 2
        shells += 1
    return math.fsum(comps), tail, absb


def _as_box(Q):
    if isinstance(Q, DyadicCube):
        return Rect(Q.bounds)
    if isinstance(Q, Rect):
        return Q
    return Rect(tuple(Q))


def _check_cube(box: Rect):
    sides = {hi - lo for lo, hi in box.bounds}
    if len(sides) != 1:
        raise ValueError("T(1) functionals need a cube")


def _triple(box: Rect) -> Rect:
    return Rect(tuple((lo - (hi - lo), hi + (hi - lo)) for lo, hi in box.bounds))


def _t1(form: WeakForm, h: SimpleFunction, Q, left: bool, fast: bool, tol: float) -> float:
    if h.integral() != 0:
        raise ValueError("T(1) functionals are defined on mean-zero functions")
    if not h.terms:
        return 0.0
    box = _as_box(Q)
    _check_cube(box)
    for r, _ in h.terms:
        if not box.contains(r):
            raise ValueError("the cube must contain the support of h")
    if fast and form.kernel.t1_vanishes:
        return 0.0
    big = SimpleFunction(h.d, [(_triple(box), 1)])
    center = np.array([float(lo + hi) / 2 for lo, hi in box.bounds])
    half = float(box.bounds[0][1] - box.bounds[0][0]) / 2
    if left:
        near = tau(form, h, big)
        far, _, _ = _far_part(form.kernel, h, center, half, 3 * half, "second", tol)
    else:
        near = tau(form, big, h)
        far, _, _ = _far_part(form.kernel, h, center, half, 3 * half, "first", tol)
    return near + far


def tau_one(form: WeakForm, h: SimpleFunction, Q, fast: bool = False, tol: float = FAR_TOL) -> float:
    """``tau(1, h) = tau(1_{3Q}, h) + iint [K(x,y) - K(z_Q,y)] 1_{(3Q)^c}(y) h(x)``."""
    return _t1(form, h, Q, left=False, fast=fast, tol=tol)


def tau_one_left(form: WeakForm, h: SimpleFunction, Q, fast: bool = False, tol: float = FAR_TOL) -> float:
    """``tau(h, 1)``, the same construction with the roles of the variables swapped."""
    return _t1(form, h, Q, left=True, fast=fast, tol=tol)


@dataclass
class TauD1:
    value: float
    near_value: float
    far_value: float
    abs_sum: float
    l1: float
    constant: float
    tail_bound: float
    radius: int


def tau_D1(form: WeakForm, f: SimpleFunction, P: DyadicCube, radius: int = 16, tol: float = FAR_TOL) -> TauD1:
    """``sum_{Q in D_i} tau(D_P f, 1_Q)`` for the generation ``i`` of ``P``.

    Cubes within ``radius`` index steps of ``P`` are summed one by one (which
    also yields the absolute sum); the rest is a single far-field integral
    against the subtracted kernel, cut off by the Dini tail bound.  The
    reported ``constant`` is ``abs_sum / ((wbp + c_K + ||omega||_Dini) ||D_P f||_1)``.
    """
    from .kernel import dini_norm

    Df = D_op(f, P)
    l1 = float(Df.l1_norm())
    if l1 == 0:
        return TauD1(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, radius)
    side = float(P.side)
    corner = np.array([float(c) for c in P.corner])
    offs = np.array(list(itertools.product(range(-radius, radius + 1), repeat=P.d)), dtype=float)
    ql = corner + offs * side
    qh = ql + side
    fl, fh, fc = floats_of(Df)
    nq, nf = len(ql), len(fc)
    vals = form.kernel.pair_many(np.repeat(fl, nq, axis=0), np.repeat(fh, nq, axis=0),
                                 np.tile(ql, (nf, 1)), np.tile(qh, (nf, 1)))
    per_q = (np.repeat(fc, nq) * vals).reshape(nf, nq).sum(axis=0)
    near = math.fsum(per_q)
    center = corner + side / 2
    far, tail, far_abs = _far_part(form.kernel, Df, center, side / 2, (radius + 0.5) * side, "second", tol)
    abs_sum = float(np.sum(np.abs(per_q))) + far_abs + tail
    wbp = form.stats.get("wbp", 0.0)
    denom = (wbp + form.kernel.c_K + dini_norm(form.kernel.modulus)) * l1
    return TauD1(near + far, near, far, abs_sum, l1, abs_sum / denom, tail, radius)


# --- boundedness probes --------------------------------------------------------------


def wbp_probe(form: WeakForm, cubes) -> float:
    """``sup |tau(1_Q, 1_Q)| / |Q|`` over the given cubes."""
    best = 0.0
    for Q in cubes:
        box = _as_box(Q)
        one = SimpleFunction(box.d, [(box, 1)])
        best = max(best, abs(tau(form, one, one)) / float(box.measure))
    form.stats["wbp"] = max(form.stats.get("wbp", 0.0), best)
    return best


def swbp_probe(form: WeakForm, samples) -> float:
    """``sup |tau(1_R, 1_S)| / |Q|`` over samples ``(R, S, Q)`` with ``R, S`` inside ``Q``."""
    best = 0.0
    for R, S, Q in samples:
        R, S, box = _as_box(R), _as_box(S), _as_box(Q)
        if not (box.contains(R) and box.contains(S)):
            raise ValueError("swbp samples need R, S inside Q")
        val = tau(form, SimpleFunction(R.d, [(R, 1)]), SimpleFunction(S.d, [(S, 1)]))
        best = max(best, abs(val) / float(box.measure))
    form.stats["swbp"] = max(form.stats.get("swbp", 0.0), best)
    return best


def random_swbp_samples(rng: np.random.Generator, d: int, n: int, resolution: int = 4):
    """Random rectangles ``R, S`` inside random dyadic cubes."""
    from .grid import DyadicRational

    out = []
    scale = 1 << resolution
    for _ in range(n):
        gen = int(rng.integers(-2, 3))
        side = DyadicRational(1, gen)
        corner = [side * int(rng.integers(-4, 4)) for _ in range(d)]
        Q = Rect(tuple((c, c + side) for c in corner))

        def sub():
            b = []
            for c in corner:
                i, j = sorted(rng.choice(scale + 1, size=2, replace=False))
                b.append((c + side * DyadicRational(int(i), resolution), c + side * DyadicRational(int(j), resolution)))
            return Rect(tuple(b))

        out.append((sub(), sub(), Q))
    return out


def weak_continuity_values(form: WeakForm, Q, shifts) -> np.ndarray:
    """``tau(1_{Q+z}, 1_{Q+z})`` for each shift ``z`` (floats)."""
    box = _as_box(Q)
    out = []
    lo = np.array([float(a) for a, _ in box.bounds])
    hi = np.array([float(b) for _, b in box.bounds])
    for z in shifts:
        z = np.asarray(z, dtype=float)
        out.append(float(form.kernel.pair_many((lo + z)[None], (hi + z)[None], (lo + z)[None], (hi + z)[None])[0]))
    return np.array(out)


def make_form(kernel_spec: str) -> WeakForm:
    from .kernel import make_kernel

    return WeakForm(make_kernel(kernel_spec))


__all__ = [
    "WeakForm",
    "tau",
    "tau_one",
    "tau_one_left",
    "tau_D1",
    "TauD1",
    "wbp_probe",
    "swbp_probe",
    "random_swbp_samples",
    "weak_continuity_values",
    "make_form",
]
