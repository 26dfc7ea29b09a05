"""Bit-exact backward trace codec with a deterministic length budget.

A finished, classified trajectory is serialized from the LAST update to the
first, starting at the all-ones point, so the decoder can rebuild each
earlier state from the later one. Per update the segment layout is

    marker '1'
    flag bit            0 = good, 1 = bad
    unary U             U ones then a zero
    unary D             D ones then a zero
    down choice         ceil(log2 C(#0_{t+1}, D)) bits: colex rank of the
                        down set's positions within the zero-bits of Y_{t+1}
    up choice (good)    ceil(log2 C(#1_{t+1}, U)) bits: colex rank of the up
                        set's positions within the one-bits of Y_{t+1}
    up choice (bad)     ceil(log2 max(|S|, 1)) bits: position of the single
                        upflipped bit inside the candidate set S of
                        z = Y_{t+1} with the down bits re-raised

and a single terminal '0' follows the earliest update. Fixed-width fields
are big-endian; widths are recomputed by the decoder from state it already
holds, which is what makes the stream self-delimiting and prefix-free.

The budget replaces the bad-branch width with
max(1, ceil(log2(alpha * (#1_{t+1} + D))) + 1); since |S| never exceeds
alpha * (#1_{t+1} + D), the budget dominates the actual length on every
trajectory, exceeding it by at least one bit (about log2(1/alpha)) per bad
update.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb
from pathlib import Path

from .classifier import Label, _candidate_set_bits, smaller_value_threshold
from .core import ContractViolation, FlipSet, ParameterError, SearchPoint
from .engine import Trajectory, UpdateRecord
from .fitness import MonotoneFunction

TRACE_MAGIC = "MCLIMB1"


class DecodeError(ValueError):
    """Malformed trace; bit_offset points at the offending read."""

    def __init__(self, message: str, bit_offset: int):
        super().__init__(f"{message} (bit offset {bit_offset})")
        self.bit_offset = bit_offset


def ceil_log2(x: int) -> int:
    if x < 1:
        raise ParameterError("ceil_log2 needs a positive integer")
    return (x - 1).bit_length()


def ceil_log2_fraction(fr: Fraction) -> int:
    """Smallest integer e with fr <= 2**e; fr must be positive."""
    if fr <= 0:
        raise ParameterError("ceil_log2_fraction needs a positive rational")
    num, den = fr.numerator, fr.denominator
    e = num.bit_length() - den.bit_length()
    # e is within one of the answer; settle it exactly.
    while (num <= den << e) if e >= 0 else (num << -e <= den):
        e -= 1
    return e + 1


@dataclass(frozen=True)
class SubsetRank:
    """Colex rank of an r-subset of [0, m): rank = sum_j C(s_j, j+1)."""

    m: int
    r: int
    rank: int

    def __post_init__(self):
        if not 0 <= self.r <= self.m:
            raise ContractViolation(f"need 0 <= r <= m, got r={self.r}, m={self.m}")
        if not 0 <= self.rank < comb(self.m, self.r):
            raise ContractViolation(f"rank {self.rank} out of range for C({self.m},{self.r})")


def subset_rank(indices, m: int) -> SubsetRank:
    idx = list(indices)
    if any(b <= a for a, b in zip(idx, idx[1:])):
        raise ContractViolation("subset indices must be strictly increasing")
    if idx and not 0 <= idx[0] <= idx[-1] < m:
        raise ContractViolation(f"subset indices must lie in [0, {m})")
    return SubsetRank(m, len(idx), sum(comb(s, j + 1) for j, s in enumerate(idx)))


def subset_unrank(rank: int, m: int, r: int) -> tuple[int, ...]:
    """Inverse of subset_rank; returns the subset in ascending order."""
    if not 0 <= rank < comb(m, r):
        raise ContractViolation(f"rank {rank} out of range for C({m},{r})")
    out = []
    rest = rank
    hi = m  # elements are found in descending order, each below the previous
    for j in range(r, 0, -1):
        lo = j - 1  # smallest value whose C(value, j) = 0 contribution fits
        # binary search the largest v in [lo, hi) with C(v, j) <= rest
        a, b = lo, hi - 1
        while a < b:
            mid = (a + b + 1) // 2
            if comb(mid, j) <= rest:
                a = mid
            else:
                b = mid - 1
        out.append(a)
        rest -= comb(a, j)
        hi = a
    out.reverse()
    return tuple(out)


class _BitWriter:
    def __init__(self):
        self.bits: list[int] = []

    def bit(self, b: int) -> None:
        self.bits.append(b & 1)

    def unary(self, count: int) -> None:
        self.bits.extend([1] * count)
        self.bits.append(0)

    def fixed(self, value: int, width: int) -> None:
        if value >> width:
            raise ContractViolation(f"value {value} does not fit in {width} bits")
        for shift in range(width - 1, -1, -1):
            self.bits.append(value >> shift & 1)


class _BitReader:
    def __init__(self, bits):
        self.bits = bits
        self.pos = 0

    def bit(self) -> int:
        if self.pos >= len(self.bits):
            raise DecodeError("unexpected end of stream", self.pos)
        b = self.bits[self.pos]
        self.pos += 1
        return b

    def unary(self, limit: int) -> int:
        count = 0
        while self.bit():
            count += 1
            if count > limit:
                raise DecodeError(f"unary run exceeds limit {limit}", self.pos)
        return count

    def fixed(self, width: int) -> int:
        value = 0
        for _ in range(width):
            value = value << 1 | self.bit()
        return value


@dataclass(frozen=True)
class EncodedTrace:
    """Self-delimiting bit sequence for one trajectory's update chain."""

    n: int
    alpha: Fraction
    function_spec: str
    bits: tuple[int, ...]

    @property
    def length(self) -> int:
        return len(self.bits)


def _indices_to_positions(universe: list[int], members) -> list[int]:
    pos = {v: i for i, v in enumerate(universe)}
    try:
        return [pos[v] for v in members]
    except KeyError as exc:
        raise ContractViolation(f"index {exc.args[0]} not in its ranking universe") from None


def encode_trajectory(traj: Trajectory, f: MonotoneFunction, alpha) -> EncodedTrace:
    """Serialize a finished, classified trajectory backwards; see module doc."""
    if not traj.reached_optimum:
        raise ContractViolation("only finished trajectories are encodable")
    if not traj.is_classified():
        raise ContractViolation("encode requires classified records")
    if f.n != traj.n:
        raise ContractViolation("function dimension does not match trajectory")
    alpha = Fraction(alpha)
    threshold = smaller_value_threshold(traj.n, alpha)
    n = traj.n

    points = traj.points()
    if points[-1].ones != n:
        raise ContractViolation("finished trajectory does not end at the all-ones point")

    w = _BitWriter()
    for rec in reversed(traj.records):
        after = points[rec.t + 1]
        w.bit(1)
        w.bit(1 if rec.label is Label.BAD else 0)
        w.unary(rec.U)
        w.unary(rec.D)

        zeros = after.zero_indices()
        down_pos = _indices_to_positions(zeros, rec.flips.down)
        w.fixed(subset_rank(down_pos, len(zeros)).rank, ceil_log2(comb(len(zeros), rec.D)))

        if rec.label is Label.GOOD:
            ones = after.one_indices()
            up_pos = _indices_to_positions(ones, rec.flips.up)
            w.fixed(subset_rank(up_pos, len(ones)).rank, ceil_log2(comb(len(ones), rec.U)))
        else:
            i = rec.flips.up[0]
            z_bits = after.bits
            for j in rec.flips.down:
                z_bits |= 1 << j
            cand = _candidate_set_bits(f, z_bits, n, threshold)
            try:
                position = cand.index(i)
            except ValueError:
                raise ContractViolation(
                    f"bad-labeled upflip {i} is not in the candidate set") from None
            w.fixed(position, ceil_log2(max(len(cand), 1)))
    w.bit(0)
    return EncodedTrace(n=n, alpha=alpha, function_spec=f.spec(), bits=tuple(w.bits))


def decode_trajectory(trace: EncodedTrace, f: MonotoneFunction, n: int, alpha) -> Trajectory:
    """Rebuild the update chain from the all-ones point backwards.

    The result matches the encoder's input through same_updates(); timing
    fields are not part of the format, so each update reports one waited
    step and total_steps equals the update count.
    """
    alpha = Fraction(alpha)
    if trace.n != n:
        raise ParameterError(f"trace is for n={trace.n}, not {n}")
    if trace.alpha != alpha:
        raise ParameterError(f"trace was encoded with alpha={trace.alpha}, not {alpha}")
    if f.n != n:
        raise ParameterError(f"function dimension {f.n} != n = {n}")
    threshold = smaller_value_threshold(n, alpha)
    r = _BitReader(trace.bits)

    bits = (1 << n) - 1
    rev: list[tuple[tuple[int, ...], tuple[int, ...], Label]] = []
    while True:
        if r.bit() == 0:
            break
        flag_bad = r.bit() == 1
        u = r.unary(n)
        d = r.unary(n)
        if u < 1:
            raise DecodeError("update with no upflip", r.pos)

        here = bits
        zeros = [j for j in range(n) if not here >> j & 1]
        ones_cnt = n - len(zeros)
        if d > len(zeros):
            raise DecodeError(f"D={d} exceeds the {len(zeros)} zero-bits", r.pos)
        rank = r.fixed(ceil_log2(comb(len(zeros), d)))
        if rank >= comb(len(zeros), d):
            raise DecodeError(f"down rank {rank} out of range", r.pos)
        down = tuple(zeros[p] for p in subset_unrank(rank, len(zeros), d))

        z_bits = here
        for j in down:
            z_bits |= 1 << j
        if flag_bad:
            if u != 1:
                raise DecodeError("bad flag with U != 1", r.pos)
            cand = _candidate_set_bits(f, z_bits, n, threshold)
            if not cand:
                raise DecodeError("bad flag but the candidate set is empty", r.pos)
            position = r.fixed(ceil_log2(len(cand)))
            if position >= len(cand):
                raise DecodeError(f"candidate position {position} out of range", r.pos)
            up = (cand[position],)
            if not here >> up[0] & 1:
                raise DecodeError("bad upflip resolves to a downflipped bit", r.pos)
        else:
            if u > ones_cnt:
                raise DecodeError(f"U={u} exceeds the {ones_cnt} one-bits", r.pos)
            ones = [j for j in range(n) if here >> j & 1]
            rank = r.fixed(ceil_log2(comb(ones_cnt, u)))
            if rank >= comb(ones_cnt, u):
                raise DecodeError(f"up rank {rank} out of range", r.pos)
            up = tuple(ones[p] for p in subset_unrank(rank, ones_cnt, u))

        prev = z_bits
        for i in up:
            prev &= ~(1 << i)
        rev.append((up, down, Label.BAD if flag_bad else Label.GOOD))
        bits = prev
    if r.pos != len(trace.bits):
        raise DecodeError("trailing bits after the terminal marker", r.pos)

    start = SearchPoint.from_bits(n, bits)
    records = []
    ones = start.ones
    for t, (up, down, label) in enumerate(reversed(rev)):
        after = ones + len(up) - len(down)
        records.append(UpdateRecord(
            t=t, flips=FlipSet(up, down), ones_before=ones, ones_after=after,
            U=len(up), D=len(down), label=label, steps_waited=1,
        ))
        ones = after
    return Trajectory(start, tuple(records), True, len(records))


def budget(traj: Trajectory, alpha) -> int:
    """Deterministic per-trajectory bit budget dominating the encoded length.

    1 + sum over updates of 2 + (U + D + 2) + ceil(log2 C(#0_{t+1}, D))
    + (good: ceil(log2 C(#1_{t+1}, U));
       bad:  max(1, ceil(log2(alpha * (#1_{t+1} + D))) + 1)).
    """
    alpha = Fraction(alpha)
    n = traj.n
    total = 1
    for rec in traj.records:
        if rec.label is Label.UNCLASSIFIED:
            raise ContractViolation("budget requires classified records")
        zeros_after = n - rec.ones_after
        total += 2 + rec.U + rec.D + 2 + ceil_log2(comb(zeros_after, rec.D))
        if rec.label is Label.GOOD:
            total += ceil_log2(comb(rec.ones_after, rec.U))
        else:
            total += max(1, ceil_log2_fraction(alpha * (rec.ones_after + rec.D)) + 1)
    return total


def pack_bits(bits) -> bytes:
    """MSB-first packing; the final byte holds the pad length (0..7)."""
    out = bytearray()
    acc = 0
    filled = 0
    for b in bits:
        acc = acc << 1 | (b & 1)
        filled += 1
        if filled == 8:
            out.append(acc)
            acc = filled = 0
    pad = (8 - filled) % 8
    if filled:
        out.append(acc << pad)
    out.append(pad)
    return bytes(out)


def unpack_bits(data: bytes) -> tuple[int, ...]:
    if not data:
        raise DecodeError("empty bit payload", 0)
    pad = data[-1]
    if pad > 7:
        raise DecodeError(f"pad byte {pad} out of range", 0)
    body = data[:-1]
    if pad and not body:
        raise DecodeError("pad without payload", 0)
    bits = []
    for byte in body:
        for shift in range(7, -1, -1):
            bits.append(byte >> shift & 1)
    if pad:
        del bits[-pad:]
    return tuple(bits)


def write_trace(path: str | Path, trace: EncodedTrace) -> None:
    header = (f"{TRACE_MAGIC} n={trace.n} "
              f"alpha={trace.alpha.numerator}/{trace.alpha.denominator} "
              f"f={trace.function_spec}\n")
    Path(path).write_bytes(header.encode("utf-8") + pack_bits(trace.bits))


def read_trace(path: str | Path) -> EncodedTrace:
    raw = Path(path).read_bytes()
    nl = raw.find(b"\n")
    if nl < 0:
        raise DecodeError("missing trace header line", 0)
    header = raw[:nl].decode("utf-8", errors="replace")
    fields = header.split(" ", 3)
    if len(fields) != 4 or fields[0] != TRACE_MAGIC:
        raise DecodeError(f"bad trace header {header!r}", 0)
    try:
        n = int(fields[1].removeprefix("n="))
        alpha = Fraction(fields[2].removeprefix("alpha="))
        spec = fields[3].removeprefix("f=")
        if not (fields[1].startswith("n=") and fields[2].startswith("alpha=")
                and fields[3].startswith("f=")):
            raise ValueError(header)
    except (ValueError, ZeroDivisionError) as exc:
        raise DecodeError(f"bad trace header {header!r}", 0) from exc
    return EncodedTrace(n=n, alpha=alpha, function_spec=spec, bits=unpack_bits(raw[nl + 1:]))
