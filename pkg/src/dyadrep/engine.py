"""Floating-point lattice evaluation of the diagonal and off-diagonal pieces.

For a convolution kernel the pairing of two same-generation child cells only
depends on their integer offset, so every pairing in the split reduces to the
unit-cell table ``T[D] = tau(1_{[0,1)^d}, 1_{D + [0,1)^d})`` scaled by
``h^d`` (``h`` the child side).  One call of :meth:`LatticeEngine.evaluate`
returns, per generation sum, the Haar multiplier and every ``(gamma, k)``
block with and without the goodness filter.  The exact (rational) routines in
:mod:`dyadrep.rep` are the reference this is tested against.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .grid import ShiftSequence, shift_offset
from .kernel import Kernel
from .simplefn import SimpleFunction, floats_of

GAMMAS = ((1, 1), (1, 0), (0, 1))
DENSE_LIMIT = 2_000_000


def band_k(dist):
    """Band index ``k = 2 + ceil(log2 dist)`` for integer ell-infinity distances ``dist >= 1``."""
    dist = np.asarray(dist, dtype=np.int64)
    return 2 + np.frexp((dist - 1).astype(float))[1]


def neighbourhood(d: int, radius: int):
    """Offsets ``n`` with ``1 <= |n|_inf <= radius`` and their band index."""
    axes = [np.arange(-radius, radius + 1)] * d
    n = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)
    dist = np.max(np.abs(n), axis=1)
    keep = dist > 0
    return n[keep], band_k(dist[keep])


@dataclass
class LevelData:
    """Cell averages of one function at generation ``i`` (parents) and ``i+1`` (children)."""

    m0: np.ndarray       # first parent index per axis
    shape: tuple         # parent box shape
    parent: np.ndarray   # parent averages, shape ``shape``
    alpha: np.ndarray    # (n_parents, 2^d) child averages minus parent average
    active: np.ndarray   # flat indices of parents with D_P f != 0


@dataclass
class EngineResult:
    haar: float
    raw: np.ndarray      # (3, K + 1): block sums by gamma and k
    good: np.ndarray     # (3, K + 1): same, restricted to k-good P
    tail: np.ndarray     # (3,): all bands beyond k_max (exact, untruncated)

    def offdiag_total(self) -> float:
        return float(self.raw.sum() + self.tail.sum())


def _level(lo, hi, c, offset, gen, d):
    """Averages over generation ``gen`` cells of the function ``sum c_t 1_{[lo_t, hi_t)}``."""
    side = 2.0 ** -gen
    h = side / 2
    blo = lo.min(axis=0)
    bhi = hi.max(axis=0)
    m0 = np.floor((blo - offset) / side).astype(np.int64)
    m1 = np.ceil((bhi - offset) / side).astype(np.int64)
    shape = tuple(int(v) for v in (m1 - m0))
    weights = []
    for j in range(d):
        edges = offset[j] + m0[j] * side + np.arange(2 * shape[j] + 1) * h
        a = np.maximum(lo[:, j][:, None], edges[None, :-1])
        b = np.minimum(hi[:, j][:, None], edges[None, 1:])
        weights.append(np.clip(b - a, 0.0, None) / h)
    if d == 1:
        child = c @ weights[0]
    else:
        letters = "abcdefgh"[:d]
        spec = "t," + ",".join("t" + x for x in letters) + "->" + letters
        child = np.einsum(spec, c, *weights)
    split = []
    for s in shape:
        split += [s, 2]
    child = child.reshape(split)
    order = list(range(0, 2 * d, 2)) + list(range(1, 2 * d, 2))
    child = child.transpose(order).reshape(shape + (2 ** d,))
    parent = child.mean(axis=-1)
    alpha = (child - parent[..., None]).reshape(-1, 2 ** d)
    active = np.flatnonzero(np.any(alpha != 0, axis=1))
    return LevelData(m0, shape, parent, alpha, active)


class LatticeEngine:
    """Split of ``tau_{a,b}(f, g)`` for one ``theta`` on the float lattice.

    Only convolution kernels whose T(1) functionals vanish are supported: the
    paraproduct pieces are then identically zero and ``tau(D_P f, 1) = 0``.
    Bands up to ``k_max`` are collected one by one, everything beyond goes to
    ``tail``.  ``k_max=None`` uses the largest band that can meet both supports,
    so only the one-sided far remainders are left in ``tail``.
    """

    def __init__(self, kernel: Kernel, f: SimpleFunction, g: SimpleFunction, a: int, b: int,
                 k_max: int | None = None):
        if not (kernel.convolution and kernel.t1_vanishes):
            raise ValueError("the lattice engine needs a convolution kernel with vanishing T(1)")
        if f.d != kernel.d or g.d != kernel.d:
            raise ValueError("dimension mismatch")
        self.kernel = kernel
        self.d = d = kernel.d
        self.a, self.b = a, b
        self.empty = f.is_zero or g.is_zero or a >= b
        self.E = np.array(list(itertools.product((0, 1), repeat=d)), dtype=np.int64)
        self._dense = None
        if self.empty:
            self.K = k_max if k_max is not None else 2
            return
        self.ff = floats_of(f)
        self.gg = floats_of(g)
        self.K = k_max if k_max is not None else self.k_bound()
        if self.K < 2:
            raise ValueError("k_max must be >= 2")
        # dense table of T over every offset that can occur between the supports
        span = int(np.ceil(np.max(np.maximum(self.ff[1].max(0), self.gg[1].max(0))
                                  - np.minimum(self.ff[0].min(0), self.gg[0].min(0))) * 2.0 ** b))
        self.M = max(2 * span + 8, 2 ** (self.K - 1) + 4)
        self._dense = None
        if (2 * self.M + 1) ** d <= DENSE_LIMIT:
            grid = np.stack(np.meshgrid(*[np.arange(-self.M, self.M + 1)] * d, indexing="ij"), axis=-1)
            self._dense = kernel.unit_cells(grid)
        self.nb, self.nb_k = neighbourhood(d, 1 << (self.K - 2))
        # W[2n - e] and V[2n + e'] on the neighbourhood, one row per child e
        self.W_nb = np.stack([self._W(2 * self.nb - e) for e in self.E])
        self.V_nb = np.stack([self._V(2 * self.nb + e) for e in self.E])
        self.W_0 = np.array([self._W(-e[None])[0] for e in self.E])
        self.V_0 = np.array([self._V(e[None])[0] for e in self.E])

    def _T(self, off):
        off = np.asarray(off)
        if self._dense is not None and off.size and np.abs(off).max() <= self.M:
            return self._dense[tuple(np.moveaxis(off + self.M, -1, 0))]
        return self.kernel.unit_cells(off)

    def _W(self, off):
        # pairing of a unit cell with the 2^d block of cells at offset ``off``
        return sum(self._T(off + e) for e in self.E)

    def _V(self, off):
        return sum(self._T(off - e) for e in self.E)

    def k_bound(self) -> int:
        """Largest band index between generation ``< b`` cubes meeting the supports."""
        lo = np.minimum(self.ff[0].min(axis=0), self.gg[0].min(axis=0))
        hi = np.maximum(self.ff[1].max(axis=0), self.gg[1].max(axis=0))
        steps = int(np.ceil(np.max(hi - lo) * 2.0 ** (self.b - 1))) + 1
        return int(band_k(steps))

    def evaluate(self, theta: ShiftSequence) -> EngineResult:
        K = self.K
        raw = np.zeros((3, K + 1))
        good = np.zeros((3, K + 1))
        tail = np.zeros(3)
        if self.empty:
            return EngineResult(0.0, raw, good, tail)
        d = self.d
        haar = []
        for i in range(self.a, self.b):
            off = np.array([float(o) for o in shift_offset(theta, i)])
            Lf = _level(*self.ff, off, i, d)
            Lg = _level(*self.gg, off, i, d)
            hd = 2.0 ** (-(i + 1) * d)
            lows = np.zeros((K + 1, d), dtype=np.int64)
            for k in range(2, K + 1):
                lows[k] = theta.low_bits_sum(i, k)
            haar.append(self._pairs(Lf, Lg, hd, raw, good, tail, lows))
            self._one_sided(Lf, Lg, hd, raw, good, tail, lows, row=1)
            self._one_sided(Lg, Lf, hd, raw, good, tail, lows, row=2)
        return EngineResult(math.fsum(haar), raw, good, tail)

    def _pairs(self, Lf, Lg, hd, raw, good, tail, lows):
        """gamma = (1,1) blocks; returns the diagonal (Haar multiplier) part."""
        if not len(Lf.active) or not len(Lg.active):
            return 0.0
        mP = np.stack(np.unravel_index(Lf.active, Lf.shape), axis=1) + Lf.m0
        mQ = np.stack(np.unravel_index(Lg.active, Lg.shape), axis=1) + Lg.m0
        n = mQ[None, :, :] - mP[:, None, :]
        delta = 2 * n[:, :, None, None, :] + self.E[None, None, None, :, :] - self.E[None, None, :, None, :]
        vals = hd * np.einsum("pe,pqef,qf->pq", Lf.alpha[Lf.active], self._T(delta), Lg.alpha[Lg.active])
        dist = np.max(np.abs(n), axis=2)
        diag = float(vals[dist == 0].sum())
        off = dist > 0
        kk = band_k(dist[off])
        vv = vals[off]
        ins = kk <= self.K
        np.add.at(raw[0], kk[ins], vv[ins])
        tail[0] += vv[~ins].sum()
        Pm = np.broadcast_to(mP[:, None, :], n.shape)[off][ins]
        ok = _good(Pm, kk[ins], lows)
        np.add.at(good[0], kk[ins][ok], vv[ins][ok])
        return diag

    def _one_sided(self, La, Lb, hd, raw, good, tail, lows, row):
        """Row 1: gamma = (1,0), cube ``m`` is P and the weight is ``<g>_Q - <g>_P``.
        Row 2: gamma = (0,1), cube ``m`` is Q and the weight is ``<f>_P - <f>_Q``.
        With ``n = m_Q - m_P`` the other cube has index ``o = m + sign n``."""
        if not len(La.active):
            return
        d = self.d
        sign = 1 if row == 1 else -1
        mA = np.stack(np.unravel_index(La.active, La.shape), axis=1) + La.m0
        alpha = La.alpha[La.active]
        shape = np.array(Lb.shape)

        def avg_b(m):
            rel = m - Lb.m0
            ok = np.all((rel >= 0) & (rel < shape), axis=-1)
            out = np.zeros(m.shape[:-1])
            out[ok] = Lb.parent[tuple(rel[ok].T)]
            return out

        def coef(j, n):
            # row 1: tau(D_P f, 1_Q) = h^d sum_e alpha[e] W[2n - e]
            # row 2: tau(1_P, D_Q g) = h^d sum_e' beta[e'] V[2n + e']
            if row == 1:
                return hd * sum(alpha[j, t] * self._W(2 * n - self.E[t]) for t in range(len(self.E)))
            return hd * sum(alpha[j, t] * self._V(2 * n + self.E[t]) for t in range(len(self.E)))

        own = avg_b(mA)
        grid = np.stack(np.meshgrid(*[np.arange(s) for s in Lb.shape], indexing="ij"), axis=-1).reshape(-1, d)
        bval = Lb.parent.reshape(-1)
        keep = bval != 0
        box, bval = grid[keep] + Lb.m0, bval[keep]
        table = self.W_nb if row == 1 else self.V_nb
        c0 = hd * (alpha @ (self.W_0 if row == 1 else self.V_0))
        c_nb = hd * (alpha @ table)  # (n_active, n_nb)
        for j in range(len(mA)):
            m = mA[j]
            sel = np.any(box != m, axis=1)
            others, ov = box[sel], bval[sel]
            n_o = sign * (others - m)
            c_o = coef(j, n_o) if len(others) else np.zeros(0)
            # untruncated value, using sum over all other cubes of the coefficient = -c(0)
            total = math.fsum(c_o * ov) + own[j] * c0[j]
            if own[j] == 0:
                if not len(others):
                    continue
                kk = band_k(np.max(np.abs(n_o), axis=1))
                ins = kk <= self.K
                nn, kk, vals = n_o[ins], kk[ins], c_o[ins] * ov[ins]
            else:
                nn, kk = self.nb, self.nb_k
                vals = c_nb[j] * (avg_b(m + sign * nn) - own[j])
            np.add.at(raw[row], kk, vals)
            tail[row] += total - math.fsum(vals)
            Pm = np.broadcast_to(m, nn.shape) if row == 1 else m - nn
            ok = _good(Pm, kk, lows)
            np.add.at(good[row], kk[ok], vals[ok])


def _good(m, k, lows):
    """Vectorized goodness of generation-``i`` cubes with indices ``m`` at band ``k``."""
    if not len(k):
        return np.zeros(0, dtype=bool)
    size = np.left_shift(1, k).astype(np.int64)
    q = size >> 2
    rel = np.mod(m - lows[k], size[:, None])
    return np.all((rel >= q[:, None]) & (rel < 3 * q[:, None]), axis=1)
