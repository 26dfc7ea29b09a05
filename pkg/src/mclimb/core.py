"""Bit-vector search points, seeded randomness, and mutation sampling.

Bit ``i`` of a search point lives at integer bit position ``i``; string
renderings put index 0 leftmost. All points and flip sets are immutable and
safe to share between workers. Generators are single-owner: one
``random.Random`` per worker, never shared.
"""

from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from random import Random

_MASK64 = (1 << 64) - 1


class ParameterError(ValueError):
    """A parameter is outside its documented range."""


class ContractViolation(ValueError):
    """An argument violates a documented precondition."""


@dataclass(frozen=True)
class RngSeed:
    """Seed plus stream id; equal pairs replay bit-identical random sequences.

    Streams are realized as CPython's ``random.Random`` (Mersenne Twister),
    whose seeding and ``random()``/``getrandbits()`` outputs are documented
    as stable across versions and platforms.
    """

    seed: int = 0
    stream: int = 0

    def generator(self) -> Random:
        return Random((self.seed & _MASK64) << 64 | (self.stream & _MASK64))


@dataclass(frozen=True)
class SearchPoint:
    """Fixed-length bit vector with a cached one-bit count."""

    n: int
    bits: int
    ones: int

    def __post_init__(self):
        if self.n < 1:
            raise ParameterError(f"dimension must be >= 1, got {self.n}")
        if not 0 <= self.bits < 1 << self.n:
            raise ContractViolation(f"bits out of range for n={self.n}")
        if self.ones != self.bits.bit_count():
            raise ContractViolation("cached one-count disagrees with a recount")

    @classmethod
    def from_bits(cls, n: int, bits: int) -> "SearchPoint":
        return cls(n, bits, bits.bit_count())

    @classmethod
    def zeros(cls, n: int) -> "SearchPoint":
        return cls(n, 0, 0)

    @classmethod
    def all_ones(cls, n: int) -> "SearchPoint":
        return cls(n, (1 << n) - 1, n)

    @classmethod
    def from_string(cls, s: str) -> "SearchPoint":
        """Parse a 0/1 string; the leftmost character is bit 0."""
        if not s or set(s) - {"0", "1"}:
            raise ParameterError(f"not a bit string: {s!r}")
        bits = 0
        for i, ch in enumerate(s):
            if ch == "1":
                bits |= 1 << i
        return cls.from_bits(len(s), bits)

    @classmethod
    def from_indices(cls, n: int, ones_at) -> "SearchPoint":
        bits = 0
        for i in ones_at:
            bits |= 1 << i
        return cls.from_bits(n, bits)

    def to_string(self) -> str:
        return "".join("1" if self.bits >> i & 1 else "0" for i in range(self.n))

    def bit(self, i: int) -> int:
        return self.bits >> i & 1

    def one_indices(self) -> list[int]:
        return [i for i in range(self.n) if self.bits >> i & 1]

    def zero_indices(self) -> list[int]:
        return [i for i in range(self.n) if not self.bits >> i & 1]

    def __str__(self) -> str:
        return self.to_string()


@dataclass(frozen=True)
class FlipSet:
    """Disjoint sorted index sets: ``up`` flips 0 to 1, ``down`` flips 1 to 0."""

    up: tuple[int, ...] = ()
    down: tuple[int, ...] = ()

    def __post_init__(self):
        for name, idx in (("up", self.up), ("down", self.down)):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ContractViolation(f"{name} indices not strictly increasing")
            if idx and idx[0] < 0:
                raise ContractViolation(f"{name} contains a negative index")
        if set(self.up) & set(self.down):
            raise ContractViolation("up and down sets overlap")

    @property
    def size(self) -> int:
        return len(self.up) + len(self.down)

    def is_empty(self) -> bool:
        return not self.up and not self.down

    def xor_mask(self) -> int:
        m = 0
        for i in self.up:
            m |= 1 << i
        for i in self.down:
            m |= 1 << i
        return m

    def validate_for(self, x: SearchPoint) -> None:
        if self.up and self.up[-1] >= x.n or self.down and self.down[-1] >= x.n:
            raise ContractViolation("flip index beyond point length")
        for i in self.up:
            if x.bits >> i & 1:
                raise ContractViolation(f"up index {i} is already a one-bit")
        for i in self.down:
            if not x.bits >> i & 1:
                raise ContractViolation(f"down index {i} is already a zero-bit")


def apply(x: SearchPoint, fs: FlipSet) -> SearchPoint:
    """Toggle exactly the flip-set indices of ``x``."""
    fs.validate_for(x)
    return SearchPoint(x.n, x.bits ^ fs.xor_mask(), x.ones + len(fs.up) - len(fs.down))


def flip_probability(c, n: int) -> Fraction:
    """Per-bit flip probability c/n as an exact rational.

    Accepts exact inputs (int, Fraction, decimal string) as well as floats,
    which are taken at their exact binary value. The edge c == n (probability
    one) is allowed so that single-bit instances can flip deterministically.
    """
    c = Fraction(c)
    if not 0 < c <= n:
        raise ParameterError(f"mutation parameter must satisfy 0 < c <= n, got c={c}, n={n}")
    return c / n


def sample_flipset_naive(x: SearchPoint, c, rng: Random) -> FlipSet:
    """Reference sampler: one Bernoulli(c/n) trial per index.

    The inclusion threshold is the double nearest c/n (relative rounding
    below 2^-52), identical to the skip sampler's target probability.
    """
    p = float(flip_probability(c, x.n))
    bits = x.bits
    random = rng.random
    ups, downs = [], []
    for i in range(x.n):
        if random() < p:
            (downs if bits >> i & 1 else ups).append(i)
    return FlipSet(tuple(ups), tuple(downs))


@lru_cache(maxsize=64)
def _neg_survival_table(n: int, p: Fraction) -> list[float]:
    # entry g holds -(1-p)^g; negated so the list ascends for bisect.
    q = 1.0 - float(p)
    surv = [1.0]
    for _ in range(n):
        surv.append(surv[-1] * q)
    return [-s for s in surv]


class SkipSampler:
    """Geometric-gap Bernoulli sampler over ``n`` positions.

    Jumps from flip to flip, so a draw costs O((1 + c) log n) comparisons
    instead of n Bernoulli trials. Gap lengths are read off a precomputed
    survival table with IEEE multiplies and comparisons only (no libm calls
    at sampling time), which keeps streams reproducible. Per-bit inclusion
    probability matches the naive sampler up to double rounding.
    """

    def __init__(self, n: int, c):
        self.n = n
        self.p = flip_probability(c, n)
        self._neg = _neg_survival_table(n, self.p)

    def gap(self, rng: Random) -> int:
        """Number of non-flipped positions before the next flip; n means none left."""
        # largest g with (1-p)^g > U; table entries beyond underflow are -0.0
        return bisect_left(self._neg, -rng.random()) - 1

    def sample(self, x: SearchPoint, rng: Random) -> FlipSet:
        if x.n != self.n:
            raise ContractViolation("point length does not match sampler")
        bits = x.bits
        n = self.n
        gap = self.gap
        ups, downs = [], []
        j = gap(rng)
        while j < n:
            (downs if bits >> j & 1 else ups).append(j)
            j += 1 + gap(rng)
        return FlipSet(tuple(ups), tuple(downs))


def sample_flipset_skip(x: SearchPoint, c, rng: Random) -> FlipSet:
    """Fast-path sampler, distributionally equivalent to the naive one."""
    return SkipSampler(x.n, c).sample(x, rng)


def random_point(n: int, rng: Random) -> SearchPoint:
    """Uniform point in {0,1}^n."""
    return SearchPoint.from_bits(n, rng.getrandbits(n))
