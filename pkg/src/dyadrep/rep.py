"""Diagonal/off-diagonal split, goodness-filtered shifts and the averaged representation.

The exact routines here enumerate cubes with rational geometry and pair the
resulting simple functions through :func:`dyadrep.form.tau`.  The Monte-Carlo
drivers use :class:`dyadrep.engine.LatticeEngine` per sample; tests pin the
engine to the exact routines.
"""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .bcr import error_term, main_term
from .engine import GAMMAS, LatticeEngine, band_k
from .form import WeakForm, tau, tau_D1, tau_one, tau_one_left
from .grid import (DyadicCube, ShiftSequence, ancestor, cube, cubes_meeting, derive_seed,
                   is_good, sample_theta, shift_offset, window_for)
from .kernel import k_tail
from .simplefn import D_op, D_pq, Rect, SimpleFunction, average

CONVENTIONS = ("2^d", "unscaled")


# --- per-generation caches -----------------------------------------------------------


class _Gen:
    """Exact averages and martingale differences of ``f`` and ``g`` at one generation."""

    def __init__(self, f: SimpleFunction, g: SimpleFunction, gen: int, theta: ShiftSequence):
        self.gen, self.theta = gen, theta
        self.f, self.g = f, g
        self._avg = {}
        self._D = {}
        self.f_cubes = _meeting(f, gen, theta)
        self.g_cubes = _meeting(g, gen, theta)

    def cube(self, idx) -> DyadicCube:
        return cube(self.theta, self.gen, idx)

    def avg(self, which: str, idx):
        key = (which, idx)
        if key not in self._avg:
            fn = self.f if which == "f" else self.g
            self._avg[key] = average(fn, self.cube(idx)) if fn.terms else 0
        return self._avg[key]

    def D(self, which: str, idx) -> SimpleFunction:
        key = (which, idx)
        if key not in self._D:
            fn = self.f if which == "f" else self.g
            self._D[key] = D_op(fn, self.cube(idx)).normalize()
        return self._D[key]


def _meeting(f: SimpleFunction, gen: int, theta: ShiftSequence) -> list:
    seen = {}
    for r, _ in f.terms:
        if r.is_empty:
            continue
        for q in cubes_meeting(r, gen, theta):
            seen[q.index] = None
    return sorted(seen)


def _band_offsets(d: int, k: int):
    """Index offsets ``n`` with ``2^{k-3} < |n|_inf <= 2^{k-2}`` (``k = 2``: ``|n|_inf = 1``)."""
    hi = 1 << (k - 2)
    lo = hi >> 1 if k > 2 else 0
    for n in itertools.product(range(-hi, hi + 1), repeat=d):
        if lo < max(abs(x) for x in n) <= hi:
            yield n


def _add(m, n, s=1):
    return tuple(x + s * y for x, y in zip(m, n))


def _is_good_at(gd: _Gen, idx, k: int) -> bool:
    return is_good(gd.cube(idx), k)


# --- diagonal part ------------------------------------------------------------------


def haar_multiplier(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence) -> float:
    """``sum_{P in D_[a,b)} tau(D_P f, D_P g)``."""
    parts = []
    for i in range(a, b):
        gd = _Gen(f, g, i, theta)
        for idx in set(gd.f_cubes) & set(gd.g_cubes):
            Df, Dg = gd.D("f", idx), gd.D("g", idx)
            if Df.terms and Dg.terms:
                parts.append(tau(form, Df, Dg))
    return math.fsum(parts)


def _t1_cache(form: WeakForm) -> dict:
    return form.stats.setdefault("t1_cache", {})


def _t1(form: WeakForm, h: SimpleFunction, P: DyadicCube, left: bool) -> float:
    # keyed by the realized corner, generation and the function itself
    key = (left, P.gen, tuple(P.corner), h.to_json())
    cache = _t1_cache(form)
    if key not in cache:
        fn = tau_one_left if left else tau_one
        cache[key] = fn(form, h, P, fast=True)
    return cache[key]


def paraproduct(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence) -> float:
    """``sum_P <f>_P tau(1, D_P g)``."""
    parts = []
    for i in range(a, b):
        gd = _Gen(f, g, i, theta)
        for idx in set(gd.f_cubes) & set(gd.g_cubes):
            Dg = gd.D("g", idx)
            mf = gd.avg("f", idx)
            if Dg.terms and mf:
                parts.append(float(mf) * _t1(form, Dg, gd.cube(idx), left=False))
    return math.fsum(parts)


def paraproduct_adj(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence) -> float:
    """``sum_P tau(D_P f, 1) <g>_P``."""
    parts = []
    for i in range(a, b):
        gd = _Gen(f, g, i, theta)
        for idx in set(gd.f_cubes) & set(gd.g_cubes):
            Df = gd.D("f", idx)
            mg = gd.avg("g", idx)
            if Df.terms and mg:
                parts.append(_t1(form, Df, gd.cube(idx), left=True) * float(mg))
    return math.fsum(parts)


def diag_term(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence) -> float:
    """``sum_P tau(D_P f, D_P g) + <f>_P tau(1, D_P g) + tau(D_P f, 1) <g>_P``."""
    return math.fsum([haar_multiplier(form, f, g, a, b, theta),
                      paraproduct(form, f, g, a, b, theta),
                      paraproduct_adj(form, f, g, a, b, theta)])


# --- off-diagonal part ----------------------------------------------------------------


def horizon(f: SimpleFunction, g: SimpleFunction, b: int) -> int:
    """``k* = 3 + ceil(log2(diam(supp f u supp g) / 2^{-(b-1)}))``: no ``(1,1)`` band beyond it."""
    boxes = [fn.bbox() for fn in (f, g) if fn.terms]
    if not boxes:
        return 2
    d = f.d
    lo = [min(bx.bounds[j][0] for bx in boxes) for j in range(d)]
    hi = [max(bx.bounds[j][1] for bx in boxes) for j in range(d)]
    diam = max(float(h - l) for l, h in zip(lo, hi)) * math.sqrt(d)
    return max(2, 3 + math.ceil(math.log2(diam * 2.0 ** (b - 1))))


def _pair_terms(form, gd: _Gen, gamma, k: int, good_only: bool):
    """Yield ``(P index, Q index, value)`` over the band-``k`` pairs of one generation
    that can contribute, following the support constraints of the split."""
    d = gd.theta.d
    g1, g2 = gamma
    if gamma == (1, 1):
        qs = set(gd.g_cubes)
        for p in gd.f_cubes:
            Df = gd.D("f", p)
            if not Df.terms or (good_only and not _is_good_at(gd, p, k)):
                continue
            for n in _band_offsets(d, k):
                q = _add(p, n)
                if q in qs:
                    Dg = gd.D("g", q)
                    if Dg.terms:
                        yield p, q, tau(form, Df, Dg)
    elif gamma == (1, 0):
        # <g>_Q - <g>_P vanishes unless Q meets supp g or <g>_P != 0
        qs = set(gd.g_cubes)
        for p in gd.f_cubes:
            Df = gd.D("f", p)
            if not Df.terms or (good_only and not _is_good_at(gd, p, k)):
                continue
            own = gd.avg("g", p) if p in qs else 0
            for n in _band_offsets(d, k):
                q = _add(p, n)
                if own == 0 and q not in qs:
                    continue
                w = D_pq(gd.g, gd.cube(q), gd.cube(p)) if q in qs else SimpleFunction.of_cube(gd.cube(q), -own)
                if w.terms and w.terms[0][1] != 0:
                    yield p, q, tau(form, Df, w)
    elif gamma == (0, 1):
        ps = set(gd.f_cubes)
        for q in gd.g_cubes:
            Dg = gd.D("g", q)
            if not Dg.terms:
                continue
            own = gd.avg("f", q) if q in ps else 0
            for n in _band_offsets(d, k):
                p = _add(q, n, -1)
                if own == 0 and p not in ps:
                    continue
                if good_only and not _is_good_at(gd, p, k):
                    continue
                w = D_pq(gd.f, gd.cube(p), gd.cube(q)) if p in ps else SimpleFunction.of_cube(gd.cube(p), -own)
                if w.terms and w.terms[0][1] != 0:
                    yield p, q, tau(form, w, Dg)
    else:
        raise ValueError(f"gamma must be one of {GAMMAS}")
    del g1, g2


def offdiag_block(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence, gamma, k: int,
                  good_only: bool = False) -> float:
    """``sum`` over same-generation band-``k`` pairs of ``tau(D^{g1}_{P,Q} f, D^{g2}_{Q,P} g)``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    gamma = tuple(gamma)
    parts = []
    for i in range(a, b):
        gd = _Gen(f, g, i, theta)
        parts.extend(v for _, _, v in _pair_terms(form, gd, gamma, k, good_only))
    return math.fsum(parts)


def offdiag_tail(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence, k_from: int) -> dict:
    """Sum over all bands ``k >= k_from`` per ``gamma`` (the ``(1,1)`` part is finite).

    For the one-sided types the total over all ``Q != P`` is
    ``sum_{Q meets supp g} tau(D_P f, 1_Q) <g>_Q - <g>_P (tau(D_P f, 1) - tau(D_P f, 1_P))``
    (and symmetrically); the bands below ``k_from`` are subtracted.
    """
    d = theta.d
    out = {}
    parts = []
    for i in range(a, b):
        gd = _Gen(f, g, i, theta)
        for p in gd.f_cubes:
            Df = gd.D("f", p)
            if not Df.terms:
                continue
            for q in gd.g_cubes:
                dist = max(abs(x - y) for x, y in zip(p, q))
                if dist and int(band_k(dist)) >= k_from:
                    Dg = gd.D("g", q)
                    if Dg.terms:
                        parts.append(tau(form, Df, Dg))
    out[(1, 1)] = math.fsum(parts)
    for gamma in ((1, 0), (0, 1)):
        parts = []
        for i in range(a, b):
            gd = _Gen(f, g, i, theta)
            mine, other, wm, wo = ((gd.f_cubes, gd.g_cubes, "f", "g") if gamma == (1, 0)
                                   else (gd.g_cubes, gd.f_cubes, "g", "f"))
            oset = set(other)
            for m in mine:
                Dm = gd.D(wm, m)
                if not Dm.terms:
                    continue
                P = gd.cube(m)
                pair = (lambda u, v: tau(form, u, v)) if gamma == (1, 0) else (lambda u, v: tau(form, v, u))
                own = float(gd.avg(wo, m)) if m in oset else 0.0
                total = [pair(Dm, SimpleFunction.of_cube(gd.cube(o), gd.avg(wo, o))) for o in other if o != m]
                if own:
                    if form.kernel.t1_vanishes:
                        full = 0.0
                    elif gamma == (1, 0):
                        full = tau_D1(form, gd.f, P).value
                    else:
                        full = _t1(form, Dm, P, left=False)
                    total.append(-own * (full - pair(Dm, SimpleFunction.of_cube(P, 1))))
                # subtract the explicit bands below k_from
                for k in range(2, k_from):
                    for n in _band_offsets(d, k):
                        o = _add(m, n, 1 if gamma == (1, 0) else -1)
                        wv = (float(gd.avg(wo, o)) if o in oset else 0.0) - own
                        if wv:
                            total.append(-wv * pair(Dm, SimpleFunction.of_cube(gd.cube(o), 1)))
                parts.append(math.fsum(total))
        out[gamma] = math.fsum(parts)
    return out


@dataclass
class SplitReport:
    main: float
    diag: float
    blocks: dict
    tail: dict
    k_star: int
    defect: float

    def as_dict(self) -> dict:
        out = asdict(self)
        out["blocks"] = {f"{g}:{k}": v for (g, k), v in self.blocks.items()}
        out["tail"] = {str(g): v for g, v in self.tail.items()}
        return out


def split_report(form: WeakForm, f, g, a: int, b: int, theta: ShiftSequence) -> SplitReport:
    """``main_term`` against ``diag + sum_{gamma, k <= k*} blocks + one-sided tails beyond k*``."""
    ks = horizon(f, g, b)
    main = main_term(form, f, g, a, b, theta)
    diag = diag_term(form, f, g, a, b, theta)
    blocks = {(gm, k): offdiag_block(form, f, g, a, b, theta, gm, k) for gm in GAMMAS for k in range(2, ks + 1)}
    tail = offdiag_tail(form, f, g, a, b, theta, ks + 1)
    recon = math.fsum([diag, *blocks.values(), *tail.values()])
    return SplitReport(main, diag, blocks, tail, ks, abs(recon - main))


# --- shifts ------------------------------------------------------------------------------


def normalization(form: WeakForm, k: int, convention: str = "2^d") -> float:
    """``N_k = 2^d / omega(2^-k)`` (or ``1 / omega(2^-k)`` under the ``unscaled`` convention)."""
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")
    w = float(form.kernel.modulus(2.0 ** -k))
    if w == 0:
        raise ValueError("degenerate modulus")
    return (2 ** form.d if convention == "2^d" else 1.0) / w


@dataclass
class ShiftBlock:
    gamma: tuple
    k: int
    values: dict = field(default_factory=dict)

    @property
    def total(self) -> float:
        return math.fsum(self.values.values())


def shift_form(form: WeakForm, f, g, S: DyadicCube, gamma, k: int, theta: ShiftSequence | None = None,
               convention: str = "2^d") -> float:
    """``a_S = N_k sum_{P, Q: P^(k) = Q^(k) = S, band k, P k-good} tau(D^{g1}_{P,Q} f, D^{g2}_{Q,P} g)``."""
    if k < 2:
        raise ValueError("k must be >= 2")
    theta = S.theta if theta is None else theta
    nk = normalization(form, k, convention)
    g1, g2 = tuple(gamma)
    if (g1, g2) not in GAMMAS:
        raise ValueError(f"gamma must be one of {GAMMAS}")
    gen = S.gen + k
    d = S.d
    low = theta.low_bits_sum(gen, k)
    base = [(s << k) + l for s, l in zip(S.index, low)]
    quarter = 1 << (k - 2)
    gd = _Gen(f, g, gen, theta)
    parts = []
    for r in itertools.product(range(quarter, 3 * quarter), repeat=d):
        p = tuple(x + y for x, y in zip(base, r))
        P = gd.cube(p)
        for n in _band_offsets(d, k):
            q = _add(p, n)
            Q = gd.cube(q)
            # the band of a good cube stays inside the common ancestor
            assert ancestor(P, k) == S and ancestor(Q, k) == S
            u = gd.D("f", p) if g1 else D_pq(f, P, Q)
            v = gd.D("g", q) if g2 else D_pq(g, Q, P)
            if u.terms and v.terms and u.terms[0][1] != 0 and v.terms[0][1] != 0:
                parts.append(tau(form, u, v))
    return nk * math.fsum(parts)


def shift_sum(form: WeakForm, f, g, a: int, b: int, gamma, k: int, theta: ShiftSequence,
              convention: str = "2^d") -> float:
    """``sum_{S in D_[a-k, b-k)} a_S``, i.e. ``N_k`` times the goodness-filtered band sum."""
    return normalization(form, k, convention) * offdiag_block(form, f, g, a, b, theta, gamma, k, good_only=True)


def shift_block(form: WeakForm, f, g, a: int, b: int, gamma, k: int, theta: ShiftSequence,
                convention: str = "2^d") -> ShiftBlock:
    """Per-``S`` values of ``a_S`` over the ancestors of the contributing good cubes."""
    gamma = tuple(gamma)
    blk = ShiftBlock(gamma, k)
    for i in range(a, b):
        gd = _Gen(f, g, i, theta)
        anc = {ancestor(gd.cube(p), k) for p, _, _ in _pair_terms(form, gd, gamma, k, True)}
        for S in sorted(anc, key=lambda c: c.index):
            blk.values[S] = shift_form(form, f, g, S, gamma, k, theta, convention)
    return blk


def size_ratio(form: WeakForm, f, g, S: DyadicCube, k: int) -> float:
    """``|a_S(f, g)| / <E_S |f|, |g|>`` for ``gamma = (1,1)``; ``nan`` when the pairing vanishes."""
    box = Rect.from_cube(S)
    fa = f.abs()
    ga = g.abs().restrict(box)
    denom = float(average(fa, S)) * float(ga.integral())
    val = shift_form(form, f, g, S, (1, 1), k)
    if denom == 0:
        return float("nan") if val == 0 else float("inf")
    return abs(val) / denom


# --- Monte Carlo -------------------------------------------------------------------------


@dataclass
class McEstimate:
    mean: object
    stderr: object
    samples: int
    seed: int
    values: np.ndarray = field(default=None, repr=False)


def _eval_chunk(args):
    functional, seeds, d, window, antithetic = args
    out = []
    for s in seeds:
        th = sample_theta(s, d, window)
        v = np.asarray(functional(th), dtype=float)
        if antithetic:
            flip = ShiftSequence(d, th.j_lo, th.j_hi, tuple(tuple(1 - x for x in vec) for vec in th.bits))
            v = 0.5 * (v + np.asarray(functional(flip), dtype=float))
        out.append(v)
    return out


def mc_expect(functional, master_seed: int, samples: int, d: int = 1, window: tuple = (-8, 8),
              antithetic: bool = False, threads: int = 1) -> McEstimate:
    """Sample mean and standard error of ``functional(theta)`` over independent draws.

    Sample ``s`` uses ``theta`` drawn from ``derive_seed(master_seed, s)``, so the
    result does not depend on ``threads``.  The functional may return an array.
    """
    if samples < 1:
        raise ValueError("need at least one sample")
    seeds = [derive_seed(master_seed, s) for s in range(samples)]
    if threads <= 1:
        vals = _eval_chunk((functional, seeds, d, window, antithetic))
    else:
        size = -(-samples // (4 * threads))
        chunks = [seeds[i:i + size] for i in range(0, samples, size)]
        with ProcessPoolExecutor(max_workers=threads) as ex:
            vals = [v for part in ex.map(_eval_chunk, [(functional, c, d, window, antithetic) for c in chunks])
                    for v in part]
    arr = np.array(vals)
    mean = arr.mean(axis=0)
    if samples > 1:
        stderr = arr.std(axis=0, ddof=1) / math.sqrt(samples)
    else:
        stderr = np.zeros_like(mean)
    if arr.ndim == 1:
        mean, stderr = float(mean), float(stderr)
    return McEstimate(mean, stderr, samples, master_seed, arr)


class EngineFunctional:
    """``theta -> [haar, raw (3 x (K+1)), good (3 x (K+1)), tail (3)]`` flattened."""

    def __init__(self, engine: LatticeEngine):
        self.engine = engine

    def __call__(self, theta):
        r = self.engine.evaluate(theta)
        return np.concatenate([[r.haar], r.raw.ravel(), r.good.ravel(), r.tail])

    def unpack(self, vec):
        K1 = self.engine.K + 1
        raw = vec[..., 1:1 + 3 * K1].reshape(vec.shape[:-1] + (3, K1))
        good = vec[..., 1 + 3 * K1:1 + 6 * K1].reshape(vec.shape[:-1] + (3, K1))
        return vec[..., 0], raw, good, vec[..., 1 + 6 * K1:]


class GoodnessIndicator:
    """``theta -> 1`` if the cube ``gen, index`` is k-good, else 0."""

    def __init__(self, gen: int, index: tuple, k: int):
        self.gen, self.index, self.k = gen, tuple(index), k

    def __call__(self, theta):
        return float(is_good(cube(theta, self.gen, self.index), self.k))


class GoodnessPosition:
    """``theta -> [goodness, position]`` for the generation-0 cube containing the origin.

    The position is the first coordinate of the generation-0 offset, which only
    depends on the bits above generation 0; goodness only on the bits at and
    below it.
    """

    def __init__(self, k: int):
        self.k = k

    def __call__(self, theta):
        off = float(shift_offset(theta, 0)[0])
        idx = tuple(-1 if float(o) > 0 else 0 for o in shift_offset(theta, 0))
        return np.array([float(is_good(cube(theta, 0, idx), self.k)), off])


@dataclass
class AveragingReport:
    gamma: tuple
    k: int
    convention: str
    lhs: float
    lhs_stderr: float
    rhs: float
    rhs_stderr: float
    diff: float
    diff_stderr: float
    samples: int
    seed: int
    passed: bool

    def as_dict(self) -> dict:
        return asdict(self)


def engine_samples(form: WeakForm, f, g, a: int, b: int, k_max: int, samples: int, seed: int,
                   threads: int = 1, antithetic: bool = False, guard: int = 0):
    """Run the lattice engine over ``samples`` draws; returns ``(functional, McEstimate)``."""
    fn = EngineFunctional(LatticeEngine(form.kernel, f, g, a, b, k_max))
    est = mc_expect(fn, seed, samples, form.d, window_for(a, b, k_max, guard), antithetic, threads)
    return fn, est


def averaging_table(form: WeakForm, f, g, a: int, b: int, gammas, ks, samples: int, seed: int,
                    convention: str = "2^d", threads: int = 1) -> list:
    """``E tau^{(gamma,k)}`` against ``omega(2^-k) E a^{(gamma,k)}`` from one shared run.

    The stderr of the difference uses the paired per-sample differences.
    """
    ks = list(ks)
    fn, est = engine_samples(form, f, g, a, b, max(max(ks), 2), samples, seed, threads)
    _, raw, good, _ = fn.unpack(est.values)
    out = []
    n = est.samples
    for gm in gammas:
        r = GAMMAS.index(tuple(gm))
        for k in ks:
            w = float(form.kernel.modulus(2.0 ** -k))
            lhs = raw[:, r, k]
            rhs = w * normalization(form, k, convention) * good[:, r, k]
            diff = lhs - rhs
            se = lambda x: float(x.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0  # noqa: E731
            dm, ds = float(diff.mean()), se(diff)
            ok = abs(dm) <= 3 * ds if ds > 0 else abs(dm) <= 1e-15
            out.append(AveragingReport(tuple(gm), k, convention, float(lhs.mean()), se(lhs), float(rhs.mean()),
                                       se(rhs), dm, ds, n, seed, bool(ok)))
    return out


def averaging_check(form: WeakForm, f, g, a: int, b: int, gamma, k: int, samples: int, seed: int,
                    convention: str = "2^d", threads: int = 1) -> AveragingReport:
    return averaging_table(form, f, g, a, b, [gamma], [k], samples, seed, convention, threads)[0]


class RepresentationFunctional:
    """Per-sample representation estimate and the exact error term ``E_{a,b}``."""

    def __init__(self, form: WeakForm, f, g, a: int, b: int, k_max: int, reference: float):
        self.form, self.f, self.g, self.a, self.b = form, f, g, a, b
        self.reference = reference
        self.engine = LatticeEngine(form.kernel, f, g, a, b, k_max)
        self.K = k_max

    def __call__(self, theta):
        r = self.engine.evaluate(theta)
        d = self.form.d
        # omega(2^-k) a^{(gamma,k)} = 2^d tau^{(gamma,k,good)}
        shifts = (2 ** d) * r.good[:, 2:].sum()
        est = r.haar + shifts
        err = error_term(self.form, self.f, self.g, self.a, self.b, theta, reference=self.reference).path_b
        return np.array([est, err])


def representation_check(form: WeakForm, f, g, a: int, b: int, k_max: int, samples: int, seed: int,
                         threads: int = 1, rel: float = 0.05) -> dict:
    """Monte-Carlo estimate of ``E[h + pi + pi* + sum_{gamma, k <= k_max} omega(2^-k) a^{(gamma,k)}]``.

    Paraproducts are zero for the supported kernels (vanishing T(1)).  The
    truncation budget is ``|mean E_{a,b}| + sum_{k > k_max} omega(2^-k)(1 + log k) ||f||_2 ||g||_2``.
    """
    ref = tau(form, f, g)
    if f.is_zero or g.is_zero:
        return {"reference": ref, "estimate": 0.0, "stderr": 0.0, "samples": samples, "seed": seed,
                "truncation": {"error_term": 0.0, "k_tail": 0.0}, "budget": 0.0, "verdict": "PASS"}
    fn = RepresentationFunctional(form, f, g, a, b, k_max, ref)
    est = mc_expect(fn, seed, samples, form.d, window_for(a, b, k_max), threads=threads)
    mean_e, se_e = est.mean[0], est.stderr[0]
    err_mean = float(est.mean[1])
    tail = k_tail(form.kernel.modulus, k_max, log_form=True)
    budget = abs(err_mean) + tail * f.l2_norm() * g.l2_norm()
    tol = max(rel * abs(ref), 3 * se_e + budget)
    ok = abs(mean_e - ref) <= tol
    return {"reference": ref, "estimate": float(mean_e), "stderr": float(se_e), "samples": samples, "seed": seed,
            "truncation": {"error_term": err_mean, "k_tail": tail}, "budget": budget, "tolerance": tol,
            "verdict": "PASS" if ok else "FAIL"}


def delta_exponent(gamma, p: float) -> float:
    """Exponent of the ``(1 + log_+ k)`` envelope for the ``(p, p')`` norm of type ``gamma`` shifts."""
    gamma = tuple(gamma)
    q = p / (p - 1)
    if gamma == (1, 1):
        return 0.5
    if gamma == (1, 0):
        return max(0.5, 1 / p)
    if gamma == (0, 1):
        return max(0.5, 1 / q)
    raise ValueError(f"gamma must be one of {GAMMAS}")


LATTICE_LIMIT = 1 << 18


def shift_norm_probe(form: WeakForm, gamma, k_list, p: float = 2.0, samples: int = 20, seed: int = 0,
                     resolution: int = 4, span: int = 4) -> list:
    """Empirical lower estimate of the ``(p, p')`` form norm of ``a^{(gamma,k)}``.

    For each ``k`` the generations ``[k-5, k-2)`` are used, where band-``k``
    pairs fit inside a support of width ``span``; the estimate is the largest
    ``|sum_S a_S(f, g)| / (||f||_p ||g||_p')`` over random ``theta`` and random
    test pairs.  Rows are normalized to the first ``k`` and carry the
    ``(1 + log_+ k)^Delta`` envelope.  When the lattice for some ``k`` exceeds
    ``LATTICE_LIMIT`` cells the row is marked as skipped.  Diagnostic only.
    """
    from .simplefn import random_simple_function

    r = GAMMAS.index(tuple(gamma))
    q = p / (p - 1)
    delta = delta_exponent(gamma, p)
    rng = np.random.default_rng(seed)
    pairs = [(random_simple_function(rng, form.d, 3, span=span, resolution=resolution),
              random_simple_function(rng, form.d, 3, span=span, resolution=resolution)) for _ in range(samples)]
    rows = []
    for k in k_list:
        a, b = k - 5, k - 2
        cells = (span * 2 ** b) ** form.d
        nb = (2 ** (k - 1) + 1) ** form.d
        if max(cells, nb) > LATTICE_LIMIT:
            rows.append({"k": k, "estimate": float("nan"), "status": "skipped: lattice too large"})
            continue
        window = window_for(a, b, k)
        best = 0.0
        for s, (f, g) in enumerate(pairs):
            if f.is_zero or g.is_zero:
                continue
            th = sample_theta(derive_seed(seed, k, s), form.d, window)
            res = LatticeEngine(form.kernel, f, g, a, b, k).evaluate(th)
            val = abs(normalization(form, k) * res.good[r, k]) / (f.lp_norm(p) * g.lp_norm(q))
            best = max(best, val)
        rows.append({"k": k, "estimate": best, "status": "ok"})
    base = next((row["estimate"] for row in rows if row["status"] == "ok" and row["estimate"] > 0), 1.0)
    for row in rows:
        env = (1 + max(math.log(row["k"]), 0.0)) ** delta
        row["normalized"] = row["estimate"] / base
        row["envelope"] = env
        row["ratio"] = row["normalized"] / env
        row["delta"] = delta
    return rows


__all__ = [
    "haar_multiplier",
    "paraproduct",
    "paraproduct_adj",
    "diag_term",
    "horizon",
    "offdiag_block",
    "offdiag_tail",
    "SplitReport",
    "split_report",
    "normalization",
    "ShiftBlock",
    "shift_form",
    "shift_sum",
    "shift_block",
    "size_ratio",
    "McEstimate",
    "mc_expect",
    "EngineFunctional",
    "GoodnessIndicator",
    "GoodnessPosition",
    "AveragingReport",
    "engine_samples",
    "averaging_table",
    "averaging_check",
    "RepresentationFunctional",
    "representation_check",
    "delta_exponent",
    "shift_norm_probe",
]
