"""Per-bit values and the good/bad classification of accepted updates.

An accepted update from y is *bad* when it upflips exactly one zero-bit i
and, in z = y + e_i, at least ceil((1-alpha)*n) one-bits have value strictly
smaller than bit i's value. Every other accepted update is *good*. The value
of a one-bit j at z is val_z(j) = f(z) - f(z - e_j), the exact fitness cost
of lowering it; strict monotonicity makes it positive. Ties in value never
count toward "strictly smaller".

Everything here is a pure function of (f, point, alpha) and safe for
concurrent use.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction

from .core import ContractViolation, FlipSet, ParameterError, SearchPoint
from .fitness import FitnessValue, MonotoneFunction


class Label(enum.Enum):
    GOOD = "good"
    BAD = "bad"
    UNCLASSIFIED = "unclassified"


def smaller_value_threshold(n: int, alpha) -> int:
    """The bad-update count threshold ceil((1-alpha)*n), exactly."""
    alpha = Fraction(alpha)
    if not 0 < alpha <= Fraction(1, 2):
        raise ParameterError(f"alpha must lie in (0, 1/2], got {alpha}")
    x = (1 - alpha) * n
    return -(-x.numerator // x.denominator)


def value(f: MonotoneFunction, z: SearchPoint, j: int) -> FitnessValue:
    """Exact cost of lowering one-bit j of z; positive for monotone f."""
    if not 0 <= j < z.n:
        raise ContractViolation(f"index {j} out of range")
    if not z.bits >> j & 1:
        raise ContractViolation(f"bit {j} of z is not a one-bit")
    v = -f.delta_bits(z.bits, (), (j,))
    if v <= 0:
        raise ContractViolation(f"nonpositive bit value at {j}; function is not strictly monotone")
    return v


@dataclass(frozen=True)
class ValueTable:
    """Values of every one-bit of a base point z."""

    z: SearchPoint
    entries: dict[int, FitnessValue]

    def strictly_smaller_count(self, v: FitnessValue) -> int:
        return sum(1 for w in self.entries.values() if w < v)


def build_value_table(f: MonotoneFunction, z: SearchPoint) -> ValueTable:
    return ValueTable(z, {j: value(f, z, j) for j in z.one_indices()})


def _single_upflip_is_bad(f: MonotoneFunction, z_bits: int, i: int, threshold: int) -> bool:
    # z_bits must already include bit i. Early exits both ways: at the
    # threshold, and when the remaining bits cannot reach it.
    vi = -f.delta_bits(z_bits, (), (i,))
    remaining = z_bits.bit_count() - 1
    if remaining < threshold:
        return False
    count = 0
    bits = z_bits & ~(1 << i)
    j = 0
    while bits:
        if bits & 1:
            remaining -= 1
            if -f.delta_bits(z_bits, (), (j,)) < vi:
                count += 1
                if count >= threshold:
                    return True
            if count + remaining < threshold:
                return False
        bits >>= 1
        j += 1
    return False


def classify_update(y: SearchPoint, fs: FlipSet, f: MonotoneFunction, alpha) -> Label:
    """Label an accepted update from y per the bad-update definition above."""
    fs.validate_for(y)
    if fs.is_empty():
        raise ContractViolation("an update must change the point")
    if f.delta_bits(y.bits, fs.up, fs.down) < 0:
        raise ContractViolation("flip set is not an accepted update")
    if len(fs.up) != 1:
        return Label.GOOD
    i = fs.up[0]
    threshold = smaller_value_threshold(y.n, alpha)
    return Label.BAD if _single_upflip_is_bad(f, y.bits | 1 << i, i, threshold) else Label.GOOD


def _candidate_set_bits(f: MonotoneFunction, z_bits: int, n: int, threshold: int) -> list[int]:
    ones = [j for j in range(n) if z_bits >> j & 1]
    if len(ones) < threshold + 1:
        return []
    vals = sorted((-f.delta_bits(z_bits, (), (j,)), j) for j in ones)
    out = []
    group_start = 0
    for pos, (v, j) in enumerate(vals):
        if vals[group_start][0] != v:
            group_start = pos
        if group_start >= threshold:
            out.append(j)
    out.sort()
    return out


def candidate_set(z: SearchPoint, f: MonotoneFunction, alpha) -> list[int]:
    """One-bits of z eligible to be the upflip of a bad update, ascending.

    j qualifies when at least ceil((1-alpha)*n) one-bits of z have strictly
    smaller value, so the result size never exceeds
    max(0, ones(z) - ceil((1-alpha)*n)). The decoder recomputes this set from
    z alone, which is what makes the bad-update branch of the codec work.
    """
    threshold = smaller_value_threshold(z.n, alpha)
    return _candidate_set_bits(f, z.bits, z.n, threshold)
