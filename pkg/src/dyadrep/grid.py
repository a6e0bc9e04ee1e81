"""Randomly shifted dyadic systems.

A system is fixed by a :class:`ShiftSequence` ``theta``; the cube of generation
``i`` and index ``m`` is ``2**-i * (m + [0,1)^d) + shift_offset(theta, i)``,
where the offset sums ``2**-j * theta_j`` over ``j > i``.  Bits are stored on a
finite window of scale indices and read as zero outside it.
"""

from __future__ import annotations

import hashlib
import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property, lru_cache, total_ordering
from typing import Iterable, Sequence

import numpy as np


class WindowExhausted(ValueError):
    """Raised when a cube generation falls below the stored scale window."""


@total_ordering
class DyadicRational:
    """Exact number ``mantissa * 2**-exponent`` kept in canonical form."""

    __slots__ = ("mantissa", "exponent")

    def __init__(self, mantissa: int, exponent: int = 0):
        mantissa = int(mantissa)
        exponent = int(exponent)
        if exponent < 0:
            mantissa <<= -exponent
            exponent = 0
        if mantissa == 0:
            exponent = 0
        elif exponent > 0:
            tz = (mantissa & -mantissa).bit_length() - 1
            shift = min(tz, exponent)
            mantissa >>= shift
            exponent -= shift
        object.__setattr__(self, "mantissa", mantissa)
        object.__setattr__(self, "exponent", exponent)

    def __setattr__(self, name, value):
        raise AttributeError("DyadicRational is immutable")

    @classmethod
    def coerce(cls, value) -> "DyadicRational":
        if isinstance(value, DyadicRational):
            return value
        if isinstance(value, bool):
            raise TypeError("bool is not a dyadic rational")
        if isinstance(value, int):
            return cls(value, 0)
        if isinstance(value, float):
            value = Fraction(value)
        if isinstance(value, str):
            return cls.parse(value)
        if isinstance(value, Fraction):
            den = value.denominator
            if den & (den - 1):
                raise ValueError(f"{value} is not a dyadic rational")
            return cls(value.numerator, den.bit_length() - 1)
        raise TypeError(f"cannot convert {type(value).__name__} to DyadicRational")

    @classmethod
    def parse(cls, text: str) -> "DyadicRational":
        """Parse ``"m/2^e"``, ``"p/q"`` with ``q`` a power of two, or an integer."""
        text = text.strip()
        if "/2^" in text:
            num, exp = text.split("/2^")
            return cls(int(num), int(exp))
        return cls.coerce(Fraction(text))

    def to_fraction(self) -> Fraction:
        return Fraction(self.mantissa, 1 << self.exponent)

    def __float__(self) -> float:
        if self.exponent < 1000 and abs(self.mantissa).bit_length() < 1000:
            return math.ldexp(float(self.mantissa), -self.exponent)
        return float(self.to_fraction())

    def __str__(self) -> str:
        return f"{self.mantissa}/2^{self.exponent}"

    def __repr__(self) -> str:
        return f"DyadicRational({self.mantissa}, {self.exponent})"

    def _aligned(self, other: "DyadicRational"):
        e = max(self.exponent, other.exponent)
        return self.mantissa << (e - self.exponent), other.mantissa << (e - other.exponent), e

    def __add__(self, other):
        if isinstance(other, int):
            other = DyadicRational(other)
        if not isinstance(other, DyadicRational):
            return NotImplemented
        a, b, e = self._aligned(other)
        return DyadicRational(a + b, e)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, int):
            other = DyadicRational(other)
        if not isinstance(other, DyadicRational):
            return NotImplemented
        a, b, e = self._aligned(other)
        return DyadicRational(a - b, e)

    def __rsub__(self, other):
        if isinstance(other, int):
            return DyadicRational(other) - self
        return NotImplemented

    def __neg__(self):
        return DyadicRational(-self.mantissa, self.exponent)

    def __abs__(self):
        return DyadicRational(abs(self.mantissa), self.exponent)

    def __mul__(self, other):
        if isinstance(other, int):
            return DyadicRational(self.mantissa * other, self.exponent)
        if isinstance(other, DyadicRational):
            return DyadicRational(self.mantissa * other.mantissa, self.exponent + other.exponent)
        if isinstance(other, Fraction):
            return self.to_fraction() * other
        return NotImplemented

    __rmul__ = __mul__

    def scale2(self, k: int) -> "DyadicRational":
        """Multiply by ``2**k``."""
        return DyadicRational(self.mantissa, self.exponent - k)

    def floor(self) -> int:
        return self.mantissa >> self.exponent

    def ceil(self) -> int:
        return -((-self.mantissa) >> self.exponent)

    def __eq__(self, other):
        if isinstance(other, DyadicRational):
            return self.mantissa == other.mantissa and self.exponent == other.exponent
        if isinstance(other, int):
            return self.exponent == 0 and self.mantissa == other
        if isinstance(other, Fraction):
            return self.to_fraction() == other
        return NotImplemented

    def __lt__(self, other):
        if isinstance(other, int):
            other = DyadicRational(other)
        if isinstance(other, Fraction):
            return self.to_fraction() < other
        if not isinstance(other, DyadicRational):
            return NotImplemented
        a, b, _ = self._aligned(other)
        return a < b

    def __hash__(self):
        return hash(self.to_fraction())


def dyadic(value) -> DyadicRational:
    return DyadicRational.coerce(value)


ZERO = DyadicRational(0)


@dataclass(frozen=True)
class ShiftSequence:
    """Random translation parameter restricted to scale indices ``j_lo..j_hi``.

    ``bits[j - j_lo]`` is the vector ``theta_j`` in ``{0,1}^d``.
    """

    d: int
    j_lo: int
    j_hi: int
    bits: tuple

    def __post_init__(self):
        if self.j_hi < self.j_lo - 1:
            raise ValueError("empty or inverted window")
        if len(self.bits) != self.j_hi - self.j_lo + 1:
            raise ValueError("bits length does not match window")
        for vec in self.bits:
            if len(vec) != self.d or any(b not in (0, 1) for b in vec):
                raise ValueError(f"invalid bit vector {vec!r}")

    @classmethod
    def zero(cls, d: int, j_lo: int, j_hi: int) -> "ShiftSequence":
        return cls(d, j_lo, j_hi, tuple((0,) * d for _ in range(j_hi - j_lo + 1)))

    @classmethod
    def from_bits(cls, d: int, j_lo: int, j_hi: int, bits: dict) -> "ShiftSequence":
        """Build from a sparse ``{j: bit vector}`` map (missing entries are zero)."""
        out = []
        for j in range(j_lo, j_hi + 1):
            vec = bits.get(j, (0,) * d)
            if isinstance(vec, int):
                vec = (vec,)
            out.append(tuple(int(b) for b in vec))
        return cls(d, j_lo, j_hi, tuple(out))

    def bit(self, j: int) -> tuple:
        if self.j_lo <= j <= self.j_hi:
            return self.bits[j - self.j_lo]
        return (0,) * self.d

    @cached_property
    def _offset_units(self) -> dict:
        # offset(gen) * 2**j_hi as integers, for gen in [j_lo - 1, j_hi]
        table = {self.j_hi: (0,) * self.d}
        acc = [0] * self.d
        for j in range(self.j_hi, self.j_lo - 1, -1):
            vec = self.bit(j)
            w = 1 << (self.j_hi - j)
            acc = [acc[t] + w * vec[t] for t in range(self.d)]
            table[j - 1] = tuple(acc)
        return table

    def offset_units(self, gen: int) -> tuple:
        """Offset of generation ``gen`` in units of ``2**-j_hi`` (integers)."""
        if gen >= self.j_hi:
            return (0,) * self.d
        if gen < self.j_lo - 1:
            raise WindowExhausted(f"generation {gen} below window start {self.j_lo} - 1")
        return self._offset_units[gen]

    def low_bits_sum(self, gen: int, k: int) -> tuple:
        """``sum_{s<k} 2**s * theta_{gen-s}`` per axis; the position of a
        generation-``gen`` cube inside its ``k``-th ancestor is its index minus
        this, modulo ``2**k``."""
        acc = [0] * self.d
        for s in range(k):
            vec = self.bit(gen - s)
            for t in range(self.d):
                acc[t] += vec[t] << s
        return tuple(acc)


def shift_offset(theta: ShiftSequence, gen: int) -> tuple:
    """``sum_{j > gen} 2**-j theta_j`` as a point with dyadic coordinates."""
    units = theta.offset_units(gen)
    return tuple(DyadicRational(u, theta.j_hi) for u in units)


@dataclass(frozen=True, eq=False)
class DyadicCube:
    gen: int
    index: tuple
    theta: ShiftSequence

    def __eq__(self, other):
        return (
            isinstance(other, DyadicCube)
            and self.gen == other.gen
            and self.index == other.index
            and (self.theta is other.theta or self.theta == other.theta)
        )

    def __hash__(self):
        return hash((self.gen, self.index))

    def __repr__(self):
        lo = ", ".join(str(c) for c in self.corner)
        return f"DyadicCube(gen={self.gen}, index={self.index}, corner=({lo}))"

    @property
    def d(self) -> int:
        return self.theta.d

    @cached_property
    def side(self) -> DyadicRational:
        return DyadicRational(1, self.gen)

    @cached_property
    def corner(self) -> tuple:
        off = shift_offset(self.theta, self.gen)
        return tuple(self.side * m + o for m, o in zip(self.index, off))

    @cached_property
    def center(self) -> tuple:
        half = DyadicRational(1, self.gen + 1)
        return tuple(c + half for c in self.corner)

    @property
    def bounds(self) -> tuple:
        return tuple((c, c + self.side) for c in self.corner)

    @property
    def volume(self) -> DyadicRational:
        return DyadicRational(1, self.gen * self.d)

    def contains(self, other: "DyadicCube") -> bool:
        return all(lo <= olo and ohi <= hi for (lo, hi), (olo, ohi) in zip(self.bounds, other.bounds))


def cube(theta: ShiftSequence, gen: int, index: Sequence[int]) -> DyadicCube:
    index = tuple(int(m) for m in index)
    if len(index) != theta.d:
        raise ValueError("index dimension mismatch")
    theta.offset_units(gen)  # window check
    return DyadicCube(gen, index, theta)


def children(q: DyadicCube) -> list:
    tb = q.theta.bit(q.gen + 1)
    base = [2 * m + b for m, b in zip(q.index, tb)]
    return [
        DyadicCube(q.gen + 1, tuple(b + e for b, e in zip(base, eps)), q.theta)
        for eps in itertools.product((0, 1), repeat=q.d)
    ]


def parent(q: DyadicCube) -> DyadicCube:
    tb = q.theta.bit(q.gen)
    q.theta.offset_units(q.gen - 1)
    return DyadicCube(q.gen - 1, tuple((m - b) >> 1 for m, b in zip(q.index, tb)), q.theta)


def ancestor(q: DyadicCube, k: int) -> DyadicCube:
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return q
    try:
        q.theta.offset_units(q.gen - k)
    except WindowExhausted:
        raise WindowExhausted("window exhausted") from None
    s = q.theta.low_bits_sum(q.gen, k)
    return DyadicCube(q.gen - k, tuple((m - t) >> k for m, t in zip(q.index, s)), q.theta)


def is_good(q: DyadicCube, k: int) -> bool:
    """True iff ``q`` lies in the concentric half of its ``k``-th ancestor."""
    if k < 2:
        raise ValueError("goodness is defined for k >= 2")
    big = ancestor(q, k)
    quarter = big.side.scale2(-2)
    for (lo, hi), (blo, _) in zip(q.bounds, big.bounds):
        if lo < blo + quarter or hi > blo + quarter * 3:
            return False
    return True


def good_position(rel: int, k: int) -> bool:
    """Integer form of goodness along one axis: ``rel`` is the cube's position
    (in own side lengths) inside its ``k``-th ancestor."""
    q = 1 << (k - 2)
    return q <= rel < 3 * q


def cubes_meeting(rect, gen: int, theta: ShiftSequence) -> list:
    """Generation-``gen`` cubes with positive-measure intersection with ``rect``.

    ``rect`` is a sequence of ``(lo, hi)`` pairs (or anything with ``.bounds``).
    """
    bounds = getattr(rect, "bounds", rect)
    if bounds is None:
        return []
    ranges = []
    for (lo, hi), o in zip(bounds, shift_offset(theta, gen)):
        lo, hi = dyadic(lo), dyadic(hi)
        if not lo < hi:
            return []
        m0 = (lo - o).scale2(gen).floor()
        m1 = (hi - o).scale2(gen).ceil()
        ranges.append(range(m0, m1))
    return [DyadicCube(gen, idx, theta) for idx in itertools.product(*ranges)]


def index_range(lo, hi, gen: int, theta: ShiftSequence, axis: int) -> tuple:
    """Half-open index range of generation-``gen`` cells meeting ``[lo, hi)`` on one axis."""
    o = shift_offset(theta, gen)[axis]
    return (dyadic(lo) - o).scale2(gen).floor(), (dyadic(hi) - o).scale2(gen).ceil()


def _seed_bytes(seed) -> bytes:
    return str(int(seed)).encode()


_BLOCK_BITS = 512


@lru_cache(maxsize=4096)
def _block_bits(seed, block: int) -> "np.ndarray":
    h = hashlib.blake2b(str(block).encode(), key=_seed_bytes(seed)[:64], digest_size=_BLOCK_BITS // 8).digest()
    return np.unpackbits(np.frombuffer(h, dtype=np.uint8), bitorder="little")


def _locate(j: int, d: int):
    per = _BLOCK_BITS // d
    block = j // per
    return block, (j - block * per) * d


def theta_bits_at(seed, j: int, d: int) -> tuple:
    """Counter-based draw of ``theta_j``: depends only on ``(seed, j)``.

    Bits come from one keyed hash per block of consecutive scale indices.
    """
    block, pos = _locate(j, d)
    bits = _block_bits(int(seed), block)
    return tuple(int(x) for x in bits[pos:pos + d])


def sample_theta(seed, d: int, window: tuple) -> ShiftSequence:
    """Independent uniform ``theta_j`` on ``{0,1}^d`` for ``j`` in ``window``."""
    j_lo, j_hi = window
    return ShiftSequence(d, j_lo, j_hi, tuple(theta_bits_at(seed, j, d) for j in range(j_lo, j_hi + 1)))


def theta_bit_array(seed, d: int, window: tuple) -> "np.ndarray":
    """Bits of ``sample_theta(seed, d, window)`` as an array of shape ``(j_hi - j_lo + 1, d)``."""
    j_lo, j_hi = window
    rows = []
    j = j_lo
    while j <= j_hi:
        block, pos = _locate(j, d)
        bits = _block_bits(int(seed), block)
        take = min(j_hi - j + 1, (_BLOCK_BITS - pos) // d)
        rows.append(bits[pos:pos + take * d].reshape(take, d))
        j += take
    return np.concatenate(rows).astype(np.int64)


def goodness_samples(master_seed, d: int, k: int, n: int, guard: int = 24):
    """Vectorized draws of ``(good, position)`` for the generation-0 cube containing the origin.

    Sample ``s`` uses ``theta`` from ``derive_seed(master_seed, s)`` on the window
    ``(1 - k, guard)``; ``position`` is the first coordinate of the generation-0
    offset.  Same values as building each cube and calling :func:`is_good`.
    """
    if k < 2:
        raise ValueError("goodness is defined for k >= 2")
    window = (1 - k, guard)
    bits = np.stack([theta_bit_array(derive_seed(master_seed, s), d, window) for s in range(n)])
    low = bits[:, :k, :]            # theta_{1-k} .. theta_0
    high = bits[:, k:, :]           # theta_1 .. theta_guard
    weights = 2.0 ** -np.arange(1, guard + 1)
    offset = np.einsum("sjd,j->sd", high, weights)
    index = np.where(offset > 0, -1, 0)
    # L = sum_{s<k} 2^s theta_{-s}: row k-1-s of ``low`` holds theta_{-s}
    L = np.einsum("sjd,j->sd", low, 2 ** np.arange(k - 1, -1, -1))
    rel = np.mod(index - L, 1 << k)
    q = 1 << (k - 2)
    good = np.all((rel >= q) & (rel < 3 * q), axis=1)
    return good.astype(float), offset[:, 0]


def derive_seed(master_seed, *counters: int) -> int:
    """Per-sample seed stream derived from a master seed."""
    msg = ",".join(str(int(c)) for c in counters).encode()
    h = hashlib.blake2b(msg, key=_seed_bytes(master_seed)[:64], digest_size=8).digest()
    return int.from_bytes(h, "little") >> 1


def window_for(a: int, b: int, k_max: int, guard: int = 0) -> tuple:
    """Scale window covering generations ``a - k_max .. b`` with ``guard`` extra fine bits."""
    return (a - k_max - 1, b + guard)


def iter_indices(ranges: Iterable[range]):
    return itertools.product(*ranges)
