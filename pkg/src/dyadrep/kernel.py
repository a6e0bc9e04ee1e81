"""Calderon-Zygmund kernels, moduli of continuity and rectangle pairings.

Sizes and distances use the max norm.  A pairing ``tau(1_R, 1_S)`` is
``int_S int_R K(x, y) dy dx``: the first rectangle carries the ``y`` variable.
"""

from __future__ import annotations

import heapq
import itertools
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate, special


class DiniConvergenceError(RuntimeError):
    def __init__(self, msg, partial):
        super().__init__(f"{msg} (partial value {partial!r})")
        self.partial = partial


class OverlapRuleUnavailable(ValueError):
    pass


class QuadratureError(RuntimeError):
    pass


# --- moduli -------------------------------------------------------------------


@dataclass(frozen=True)
class Modulus:
    """Nondecreasing ``omega: [0, 1/2] -> [0, inf)`` with a descriptor string."""

    func: Callable = field(compare=False)
    descriptor: str = "custom"

    def __call__(self, t):
        return self.func(t)

    def tail_integral(self, v: float) -> float:
        """``int_0^v omega(u) du / u``."""
        if v <= 0:
            return 0.0
        val, _ = integrate.quad(lambda t: self.func(math.exp(-t)), -math.log(v), np.inf, limit=200)
        return val


@dataclass(frozen=True)
class PowerModulus(Modulus):
    """``omega(t) = c * t**delta``."""

    c: float = 1.0
    delta: float = 1.0

    def __init__(self, c: float = 1.0, delta: float = 1.0):
        if delta <= 0:
            raise ValueError("power modulus needs delta > 0")
        object.__setattr__(self, "c", float(c))
        object.__setattr__(self, "delta", float(delta))
        object.__setattr__(self, "func", lambda t, c=float(c), dl=float(delta): c * np.power(t, dl))
        object.__setattr__(self, "descriptor", f"power:{delta:g}*{c:g}")

    def tail_integral(self, v: float) -> float:
        return 0.0 if v <= 0 else self.c * v**self.delta / self.delta


ZERO_MODULUS = Modulus(lambda t: 0.0 * np.asarray(t, dtype=float), "zero")


def dini_norm(modulus: Modulus, s: float = 0.0, tol: float = 1e-10) -> float:
    """``int_0^{1/2} omega(u) (log 1/u)^s du/u`` after substituting ``u = e^{-t}``."""
    if s < 0:
        raise ValueError("s must be nonnegative")

    def integrand(t):
        return float(modulus(math.exp(-t))) * t**s

    with warnings.catch_warnings():
        # the error estimate below decides convergence
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        val, err = integrate.quad(integrand, math.log(2.0), np.inf, epsabs=tol / 10, epsrel=1e-13, limit=500)
    # absolute below one, relative above: float64 cannot certify 1e-10 on large values
    if not np.isfinite(val) or err > tol * max(1.0, abs(val)):
        raise DiniConvergenceError("Dini integral did not converge", val)
    return val


def power_dini_closed(c: float, delta: float, s: float) -> float:
    """Closed form for ``omega = c t^delta``: ``c delta^{-(s+1)} Gamma(s+1, delta ln 2)``."""
    return c * delta ** (-(s + 1)) * special.gammaincc(s + 1, delta * math.log(2)) * special.gamma(s + 1)


def k_tail(modulus: Modulus, k_max: int, power: float = 0.5, log_form: bool = False, rel: float = 1e-14) -> float:
    """``sum_{k > k_max} omega(2^-k) w(k)`` with ``w(k) = k**power`` or ``1 + log k``."""
    total = 0.0
    k = k_max + 1
    while True:
        w = (1.0 + math.log(k)) if log_form else k**power
        term = float(modulus(2.0**-k)) * w
        total += term
        if term <= rel * max(total, 1e-300) or k > k_max + 4000:
            break
        k += 1
    return total


# --- one- and two-dimensional antiderivatives ------------------------------


def _hilbert_g(u):
    # u log|u|; the linear part of u log|u| - u cancels in every pairing
    u = np.asarray(u, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = u * np.log(np.abs(u))
    return np.where(u == 0, 0.0, out)


def _riesz_phi(a, b):
    """Fourth antiderivative of ``a / (a^2 + b^2)^{3/2}``: odd in ``a``, even in ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    sa = np.sign(a)
    a = np.abs(a)
    b = np.abs(b)
    r = np.hypot(a, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        t1 = np.where(a > 0, -a * b * np.arcsinh(b / a), 0.0)
        t3 = np.where(b > 0, -0.5 * b * b * np.arcsinh(a / b), 0.0)
    return sa * (t1 + 0.5 * a * r + t3)


_SIGNS4 = np.array([1.0, -1.0, -1.0, 1.0])


def _breaks(rl, rh, sl, sh):
    """The four difference points of an axis pair, aligned with ``_SIGNS4``."""
    return np.stack([sh - rl, sh - rh, sl - rl, sl - rh], axis=-1)


def overlap_profile(rl, rh, sl, sh, u):
    """``|[sl,sh) cap ([rl,rh) + u)|`` on one axis, vectorized in ``u``."""
    return np.clip(np.minimum(sh, rh + u) - np.maximum(sl, rl + u), 0.0, None)


# --- kernels --------------------------------------------------------------------


class Kernel:
    """Base class.  Subclasses set ``d``, ``c_K``, ``modulus`` and evaluation."""

    name = "kernel"
    d = 1
    c_K = 1.0
    convolution = False
    odd = False
    has_overlap_rule = False
    t1_vanishes = False

    def __init__(self, modulus: Modulus):
        self.modulus = modulus
        self._tables = {}

    def value(self, x, y):
        if self.convolution:
            return self.k(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        raise NotImplementedError

    def k(self, u):
        raise NotImplementedError

    # rectangles are passed as float arrays lo, hi of shape (..., d)
    def closed_pairs(self, rl, rh, sl, sh):
        return None

    def pairing_disjoint(self, R, S) -> float:
        rl, rh, sl, sh = _rect_arrays(R, S)
        if _overlap_measure(rl, rh, sl, sh) > 0:
            raise ValueError("pairing_disjoint needs rectangles with |R cap S| = 0")
        out = self.closed_pairs(rl, rh, sl, sh)
        if out is not None:
            return float(out)
        return quadrature_pairing(self, R, S)

    def pairing_full(self, R, S) -> float:
        rl, rh, sl, sh = _rect_arrays(R, S)
        if _overlap_measure(rl, rh, sl, sh) > 0 and not self.has_overlap_rule:
            raise OverlapRuleUnavailable(f"overlap rule unavailable for kernel {self.name!r}")
        out = self.closed_pairs(rl, rh, sl, sh)
        if out is not None:
            return float(out)
        return quadrature_pairing(self, R, S)

    def pair_many(self, rl, rh, sl, sh):
        """Vectorized pairings for arrays of rectangles of shape ``(n, d)``."""
        rl, rh, sl, sh = (np.asarray(v, dtype=float) for v in (rl, rh, sl, sh))
        if not self.has_overlap_rule:
            ov = np.prod(np.clip(np.minimum(rh, sh) - np.maximum(rl, sl), 0, None), axis=-1)
            if np.any(ov > 0):
                raise OverlapRuleUnavailable(f"overlap rule unavailable for kernel {self.name!r}")
        out = self.closed_pairs(rl, rh, sl, sh)
        if out is not None:
            return out
        return np.array([quadrature_pairing(self, (a, b), (c, e)) for a, b, c, e in zip(rl, rh, sl, sh)])

    def unit_cell_table(self, radius: int) -> np.ndarray:
        """``T[D] = tau(1_{[0,1)^d}, 1_{D + [0,1)^d})`` for ``|D|_inf <= radius``,
        stored with index ``D + radius``.  Cached per kernel."""
        for r, tab in self._tables.items():
            if r >= radius:
                sl = tuple(slice(r - radius, r + radius + 1) for _ in range(self.d))
                return tab[sl]
        tab = self._build_table(radius)
        self._tables = {radius: tab}
        return tab

    def _build_table(self, radius: int) -> np.ndarray:
        n = 2 * radius + 1
        grids = np.meshgrid(*([np.arange(-radius, radius + 1, dtype=float)] * self.d), indexing="ij")
        off = np.stack([g.ravel() for g in grids], axis=-1)
        zeros = np.zeros_like(off)
        vals = np.empty(len(off))
        near = np.max(np.abs(off), axis=1) <= 6
        cl = self.closed_pairs(zeros[near], zeros[near] + 1, off[near], off[near] + 1)
        if cl is None:
            cl = np.array([quadrature_pairing(self, (z, z + 1), (o, o + 1)) for z, o in zip(zeros[near], off[near])])
        vals[near] = cl
        vals[~near] = _far_cells(self, off[~near])
        return vals.reshape((n,) * self.d)

    def unit_cells(self, off) -> np.ndarray:
        """``T[D]`` for an integer array of offsets of shape ``(..., d)``."""
        off = np.asarray(off)
        shape = off.shape[:-1]
        flat = off.reshape(-1, self.d)
        radius = 24
        tab = self.unit_cell_table(radius)
        out = np.empty(len(flat))
        inside = np.max(np.abs(flat), axis=1) <= radius
        idx = tuple((flat[inside] + radius).T)
        out[inside] = tab[idx]
        if np.any(~inside):
            out[~inside] = _far_cells(self, flat[~inside].astype(float))
        return out.reshape(shape)

    def check_size(self, x, y) -> np.ndarray:
        """``|K(x,y)| |x-y|^d / c_K`` (should be at most 1)."""
        dist = np.max(np.abs(np.asarray(x) - np.asarray(y)), axis=-1)
        return np.abs(self.value(x, y)) * dist**self.d / self.c_K

    def check_smoothness(self, x, xp, y) -> np.ndarray:
        """Ratio of the two-sided difference to ``omega(|x-x'|/|x-y|) |x-y|^-d``."""
        dist = np.max(np.abs(x - y), axis=-1)
        t = np.max(np.abs(x - xp), axis=-1) / dist
        lhs = np.abs(self.value(x, y) - self.value(xp, y)) + np.abs(self.value(y, x) - self.value(y, xp))
        rhs = self.modulus(t) / dist**self.d
        return lhs / rhs

    def describe(self) -> str:
        return f"{self.name}(d={self.d}, c_K={self.c_K:g}, omega={self.modulus.descriptor})"


def _far_cells(kern: Kernel, off: np.ndarray, order: int = 8) -> np.ndarray:
    """Unit-cell pairings for well-separated offsets: Gauss rule in ``u = x - y``
    against the tent-product weight ``prod_j (1 - |u_j - D_j|)``."""
    if len(off) == 0:
        return np.empty(0)
    d = kern.d
    t, w = np.polynomial.legendre.leggauss(order)
    # each axis: two halves [D-1, D] and [D, D+1]
    nodes1 = np.concatenate([(t - 1) / 2, (t + 1) / 2])  # relative to D
    wts1 = np.concatenate([w / 2, w / 2]) * (1 - np.abs(nodes1))
    grids = np.meshgrid(*([nodes1] * d), indexing="ij")
    rel = np.stack([g.ravel() for g in grids], axis=-1)
    wg = np.ones(len(rel))
    for g in np.meshgrid(*([wts1] * d), indexing="ij"):
        wg = wg * g.ravel()
    out = np.empty(len(off))
    chunk = max(1, 200000 // len(rel))
    for s in range(0, len(off), chunk):
        u = off[s:s + chunk, None, :] + rel[None, :, :]
        out[s:s + chunk] = kern.k(u) @ wg
    return out


def _rect_arrays(R, S):
    def conv(X):
        b = getattr(X, "bounds", None)
        if b is not None:
            lo = np.array([float(p[0]) for p in b])
            hi = np.array([float(p[1]) for p in b])
            return lo, hi
        lo, hi = X
        return np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float))

    rl, rh = conv(R)
    sl, sh = conv(S)
    return rl, rh, sl, sh


def _overlap_measure(rl, rh, sl, sh) -> float:
    return float(np.prod(np.clip(np.minimum(rh, sh) - np.maximum(rl, sl), 0, None)))


class HilbertKernel(Kernel):
    """``K(x, y) = 1/(x - y)`` on the line, with the principal-value completion."""

    name = "hilbert"
    d = 1
    c_K = 1.0
    convolution = True
    odd = True
    has_overlap_rule = True
    t1_vanishes = True

    def __init__(self):
        # |1/u - 1/u'| <= t/((1-t)|u|) for |u-u'| = t|u|; two such terms, t <= 1/2
        super().__init__(PowerModulus(4.0, 1.0))

    def k(self, u):
        u = np.asarray(u, dtype=float)
        if u.ndim and u.shape[-1] == 1:
            u = u[..., 0]
        return 1.0 / u

    def closed_pairs(self, rl, rh, sl, sh):
        c = _breaks(rl[..., 0], rh[..., 0], sl[..., 0], sh[..., 0])
        return _hilbert_g(c) @ _SIGNS4

    def _build_table(self, radius: int) -> np.ndarray:
        n = np.arange(-radius, radius + 1, dtype=float)
        out = np.zeros_like(n)
        big = np.abs(n) >= 2
        m = n[big]
        # (m+1)log|m+1| - 2 m log|m| + (m-1)log|m-1| without cancellation
        out[big] = m * np.log1p(-1.0 / (m * m)) + np.log1p(1.0 / m) - np.log1p(-1.0 / m)
        small = ~big
        out[small] = _hilbert_g(n[small] + 1) - 2 * _hilbert_g(n[small]) + _hilbert_g(n[small] - 1)
        return out


    def unit_cells(self, off) -> np.ndarray:
        n = np.asarray(off, dtype=float)[..., 0]
        out = np.empty_like(n)
        big = np.abs(n) >= 2
        m = n[big]
        out[big] = m * np.log1p(-1.0 / (m * m)) + np.log1p(1.0 / m) - np.log1p(-1.0 / m)
        s = n[~big]
        out[~big] = _hilbert_g(s + 1) - 2 * _hilbert_g(s) + _hilbert_g(s - 1)
        return out


class RieszKernel(Kernel):
    """``K(x, y) = (x_1 - y_1) / |x - y|_2^3`` in the plane, with its principal-value
    completion.  ``delta`` selects the declared modulus ``C t^delta``."""

    name = "power"
    d = 2
    c_K = 1.0
    convolution = True
    odd = True
    has_overlap_rule = True
    t1_vanishes = True

    def __init__(self, delta: float = 0.5):
        if not 0 < delta <= 1:
            raise ValueError("delta must lie in (0, 1]")
        self.delta = float(delta)
        # |grad k| <= 2/|u|_2^3, |w|_2 >= |u|_inf / 2 on the segment, |u - u'|_2 <= sqrt2 t |u|_inf,
        # both kernel differences count; t <= t^delta 2^(delta - 1) for t <= 1/2
        c = 32.0 * math.sqrt(2.0) * 2.0 ** (self.delta - 1.0)
        super().__init__(PowerModulus(c, self.delta))

    def k(self, u):
        u = np.asarray(u, dtype=float)
        r2 = u[..., 0] ** 2 + u[..., 1] ** 2
        return u[..., 0] / (r2 * np.sqrt(r2))

    def closed_pairs(self, rl, rh, sl, sh):
        c1 = _breaks(rl[..., 0], rh[..., 0], sl[..., 0], sh[..., 0])
        c2 = _breaks(rl[..., 1], rh[..., 1], sl[..., 1], sh[..., 1])
        vals = _riesz_phi(c1[..., :, None], c2[..., None, :])
        return np.einsum("...ij,i,j->...", vals, _SIGNS4, _SIGNS4)


class GenericKernel(Kernel):
    """User kernel given pointwise; pairings by quadrature, disjoint pairs only."""

    name = "generic"

    def __init__(self, d: int, func: Callable, c_K: float, modulus: Modulus, convolution: bool = False,
                 odd: bool = False, name: str = "generic"):
        super().__init__(modulus)
        self.d = d
        self.func = func
        self.c_K = c_K
        self.convolution = convolution
        self.odd = odd
        self.name = name

    def k(self, u):
        if not self.convolution:
            raise NotImplementedError("not a convolution kernel")
        return self.func(u)

    def value(self, x, y):
        if self.convolution:
            return self.func(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
        return self.func(np.asarray(x, dtype=float), np.asarray(y, dtype=float))


# --- quadrature -------------------------------------------------------------------


@lru_cache(maxsize=None)
def _gauss(n: int):
    return np.polynomial.legendre.leggauss(n)


def _tensor_rule(lo, hi, n):
    t, w = _gauss(n)
    d = len(lo)
    pts1 = [(lo[j] + hi[j]) / 2 + (hi[j] - lo[j]) / 2 * t for j in range(d)]
    w1 = [(hi[j] - lo[j]) / 2 * w for j in range(d)]
    grids = np.meshgrid(*pts1, indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    wg = np.ones(len(pts))
    for g in np.meshgrid(*w1, indexing="ij"):
        wg = wg * g.ravel()
    return pts, wg


def _adaptive_cubature(func, boxes, tol: float, n: int = 6, max_boxes: int = 20000):
    """Globally adaptive tensor Gauss cubature over a list of boxes.

    Each box carries the value of its ``2^d`` children's rules and the error
    estimate ``|children - one rule|``; the box with the largest estimate is
    bisected in every axis until the summed estimate drops below ``tol``.
    """
    bits = np.array(list(itertools.product((False, True), repeat=len(boxes[0][0]))), dtype=bool) if boxes else None

    def rule(lo, hi):
        pts, wg = _tensor_rule(lo, hi, n)
        return float(func(pts) @ wg)

    def entry(lo, hi, coarse):
        mid = (lo + hi) / 2
        kids = []
        for corner in bits:
            clo = np.where(corner, mid, lo)
            chi = np.where(corner, hi, mid)
            kids.append((clo, chi, rule(clo, chi)))
        fine = math.fsum(v for _, _, v in kids)
        return (-abs(fine - coarse), next(_counter), lo, hi, fine, kids)

    heap = []
    for lo, hi in boxes:
        lo = np.asarray(lo, float)
        hi = np.asarray(hi, float)
        heapq.heappush(heap, entry(lo, hi, rule(lo, hi)))
    count = len(heap)
    while heap:
        err = -math.fsum(e[0] for e in heap)
        if err <= tol:
            break
        if count > max_boxes:
            raise QuadratureError(f"cubature budget exhausted (error estimate {err:.3g})")
        neg, _, lo, hi, fine, kids = heapq.heappop(heap)
        if np.max(hi - lo) < 1e-14:
            heapq.heappush(heap, (0.0, next(_counter), lo, hi, fine, kids))
            continue
        for clo, chi, v in kids:
            heapq.heappush(heap, entry(clo, chi, v))
            count += 1
    return math.fsum(e[4] for e in heap), -math.fsum(e[0] for e in heap)


_counter = itertools.count()


def quadrature_pairing(kern: Kernel, R, S, tol: float = 1e-11) -> float:
    """Adaptive quadrature for ``tau(1_R, 1_S)``.

    Convolution kernels integrate ``k(u)`` against the overlap profile
    ``phi(u) = |S cap (R + u)|`` in the ``d``-dimensional difference variable,
    cut at the profile's kinks and at the origin; odd kernels use the
    symmetrized weight ``(phi(u) - phi(-u))/2``, which is also the
    principal value when the rectangles overlap.  Other kernels use tensor
    Gauss rules on ``R x S`` and need disjoint rectangles.
    """
    rl, rh, sl, sh = _rect_arrays(R, S)
    d = len(rl)
    if kern.convolution:
        c = _breaks(rl, rh, sl, sh)  # (d, 4)
        axes = []
        for j in range(d):
            pts = set(c[j].tolist())
            if kern.odd:
                pts |= {-p for p in c[j].tolist()}
            pts.add(0.0)
            axes.append(sorted(pts))

        def weight(u):
            w = np.ones(u.shape[:-1])
            for j in range(d):
                w = w * overlap_profile(rl[j], rh[j], sl[j], sh[j], u[..., j])
            return w

        if kern.odd:
            def func(u):
                return kern.k(u) * (weight(u) - weight(-u)) / 2
        else:
            if _overlap_measure(rl, rh, sl, sh) > 0:
                raise OverlapRuleUnavailable(f"overlap rule unavailable for kernel {kern.name!r}")

            def func(u):
                return kern.k(u) * weight(u)

        boxes = []
        for cell in itertools.product(*[range(len(a) - 1) for a in axes]):
            lo = [axes[j][cell[j]] for j in range(d)]
            hi = [axes[j][cell[j] + 1] for j in range(d)]
            mid = np.array([(x + y) / 2 for x, y in zip(lo, hi)])
            if kern.odd:
                if weight(mid) == 0 and weight(-mid) == 0:
                    continue
            elif weight(mid) == 0:
                continue
            boxes.append((lo, hi))
        scale = max(float(np.prod(rh - rl)), float(np.prod(sh - sl)))
        val, _ = _adaptive_cubature(func, boxes, tol * max(scale, 1.0))
        return val
    if _overlap_measure(rl, rh, sl, sh) > 0:
        raise OverlapRuleUnavailable(f"overlap rule unavailable for kernel {kern.name!r}")

    def func2(z):
        x = z[:, d:]
        y = z[:, :d]
        return kern.value(x, y)

    lo = np.concatenate([rl, sl])
    hi = np.concatenate([rh, sh])
    gap = float(np.max(np.maximum(sl - rh, rl - sh)))
    if gap <= 0:
        raise QuadratureError("touching rectangles need a convolution kernel for quadrature")
    val, _ = _adaptive_cubature(func2, [(lo, hi)], tol * gap**-d, n=5)
    return val


# --- registry ---------------------------------------------------------------------


def make_kernel(spec: str) -> Kernel:
    """``"hilbert"`` or ``"power:<delta>"`` (the planar Riesz-type kernel)."""
    spec = spec.strip().lower()
    if spec == "hilbert":
        return HilbertKernel()
    if spec.startswith("power"):
        _, _, rest = spec.partition(":")
        return RieszKernel(float(rest) if rest else 0.5)
    raise ValueError(f"unknown kernel {spec!r}")


def make_modulus(spec: str) -> Modulus:
    """``"power:<delta>"`` or ``"power:<delta>:<c>"``, or ``"zero"``."""
    spec = spec.strip().lower()
    if spec == "zero":
        return ZERO_MODULUS
    if spec.startswith("power:"):
        parts = spec.split(":")
        delta = float(parts[1])
        c = float(parts[2]) if len(parts) > 2 else 1.0
        return PowerModulus(c, delta)
    raise ValueError(f"unknown modulus {spec!r}")
