"""The (1+1)-EA loop with full trajectory instrumentation.

Each round flips every bit of the current point independently with
probability c/n and keeps the offspring when its fitness is at least the
parent's (ties accepted). Rounds that change the point are recorded as
updates; rounds with an empty flip set still count toward total_steps. A
single run is strictly sequential; independent runs may execute concurrently
because nothing mutable is shared.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence, Union

from .classifier import Label, _single_upflip_is_bad, smaller_value_threshold
from .core import (
    ContractViolation,
    FlipSet,
    ParameterError,
    RngSeed,
    SearchPoint,
    SkipSampler,
    apply,
    random_point,
)
from .fitness import MonotoneFunction, parse_function

StartSpec = Union[str, SearchPoint]  # "uniform" | "zeros" | explicit point


def default_max_steps(n: int) -> int:
    """Safety cap far above the quasilinear regime for c <= 1.2."""
    return int(10**4 * n * math.log2(n + 1))


@dataclass(frozen=True)
class RunConfig:
    n: int
    c: Fraction
    function: Union[str, MonotoneFunction]
    seed: RngSeed = RngSeed(0, 0)
    start: StartSpec = "uniform"
    max_steps: int | None = None
    alpha: Fraction = Fraction(1, 4)
    classify: bool = True

    def resolved_function(self) -> MonotoneFunction:
        if isinstance(self.function, str):
            return parse_function(self.function, self.n)
        return self.function

    def resolved_max_steps(self) -> int:
        return default_max_steps(self.n) if self.max_steps is None else self.max_steps


@dataclass(frozen=True)
class UpdateRecord:
    """One accepted, point-changing round."""

    t: int
    flips: FlipSet
    ones_before: int
    ones_after: int
    U: int
    D: int
    label: Label
    steps_waited: int

    def __post_init__(self):
        if self.U != len(self.flips.up) or self.D != len(self.flips.down):
            raise ContractViolation("U/D disagree with the flip set")
        if self.U < 1:
            raise ContractViolation("an accepted update must flip at least one zero-bit")
        if self.ones_after != self.ones_before + self.U - self.D:
            raise ContractViolation("one-count bookkeeping broken")
        if self.steps_waited < 1:
            raise ContractViolation("an update takes at least one step")


@dataclass(frozen=True)
class Trajectory:
    """The update chain: start point plus every accepted change, in order."""

    start: SearchPoint
    records: tuple[UpdateRecord, ...]
    reached_optimum: bool
    total_steps: int

    @property
    def T(self) -> int:
        return len(self.records)

    @property
    def n(self) -> int:
        return self.start.n

    def points(self) -> list[SearchPoint]:
        """Y_0 .. Y_T, by replaying the flip sets."""
        pts = [self.start]
        for rec in self.records:
            pts.append(apply(pts[-1], rec.flips))
        return pts

    def final_point(self) -> SearchPoint:
        pt = self.start
        for rec in self.records:
            pt = apply(pt, rec.flips)
        return pt

    def bad_count(self) -> int:
        return sum(1 for r in self.records if r.label is Label.BAD)

    def is_classified(self) -> bool:
        return all(r.label is not Label.UNCLASSIFIED for r in self.records)

    def same_updates(self, other: "Trajectory") -> bool:
        """Equality of the update chain itself.

        Timing fields (steps_waited, total_steps) are not part of the chain
        and are ignored; the codec round-trips everything else.
        """
        if (self.start, self.reached_optimum, self.T) != (other.start, other.reached_optimum, other.T):
            return False
        return all(
            (a.t, a.flips, a.ones_before, a.ones_after, a.label)
            == (b.t, b.flips, b.ones_before, b.ones_after, b.label)
            for a, b in zip(self.records, other.records)
        )

    def canonical_text(self) -> str:
        """Stable line-oriented serialization for golden comparisons."""
        lines = [f"n={self.n}", f"start={self.start.to_string()}",
                 f"reached={int(self.reached_optimum)}", f"total_steps={self.total_steps}"]
        for r in self.records:
            lines.append(
                f"t={r.t} up={','.join(map(str, r.flips.up))}"
                f" down={','.join(map(str, r.flips.down))}"
                f" ones={r.ones_before}->{r.ones_after}"
                f" label={r.label.value} waited={r.steps_waited}")
        return "\n".join(lines) + "\n"

    def validate(self) -> None:
        """Replay and re-check every invariant; test/debug helper."""
        pt = self.start
        for rec in self.records:
            if rec.ones_before != pt.ones:
                raise ContractViolation(f"record {rec.t}: ones_before mismatch")
            pt = apply(pt, rec.flips)
            if rec.ones_after != pt.ones:
                raise ContractViolation(f"record {rec.t}: ones_after mismatch")
        if self.reached_optimum != (pt.ones == pt.n):
            raise ContractViolation("reached_optimum flag disagrees with the final point")
        if sum(r.steps_waited for r in self.records) > self.total_steps:
            raise ContractViolation("waited steps exceed total_steps")


def _resolve_start(config: RunConfig, rng) -> SearchPoint:
    if isinstance(config.start, SearchPoint):
        if config.start.n != config.n:
            raise ParameterError("explicit start point has the wrong length")
        return config.start
    if config.start == "uniform":
        return random_point(config.n, rng)
    if config.start == "zeros":
        return SearchPoint.zeros(config.n)
    raise ParameterError(f"unknown start spec {config.start!r}")


def run(config: RunConfig) -> Trajectory:
    """Run until the all-ones point or the step cap.

    Deterministic given the config (seed included): the start point is drawn
    first, then one geometric-gap mutation draw per round. Classification is
    observation-only and never touches the random stream.
    """
    n = config.n
    f = config.resolved_function()
    if f.n != n:
        raise ParameterError(f"function dimension {f.n} != n = {n}")
    max_steps = config.resolved_max_steps()
    if max_steps < 1:
        raise ParameterError("max_steps must be >= 1")
    alpha = Fraction(config.alpha)
    threshold = smaller_value_threshold(n, alpha)

    rng = config.seed.generator()
    start = _resolve_start(config, rng)
    sampler = SkipSampler(n, config.c)

    gap = sampler.gap
    delta_bits = f.delta_bits
    classify = config.classify
    bits = start.bits
    ones = start.ones
    all_ones = (1 << n) - 1
    records: list[UpdateRecord] = []
    total_steps = 0
    waited = 0

    while bits != all_ones and total_steps < max_steps:
        total_steps += 1
        waited += 1
        ups: list[int] = []
        downs: list[int] = []
        j = gap(rng)
        while j < n:
            (downs if bits >> j & 1 else ups).append(j)
            j += 1 + gap(rng)
        if not ups:
            if downs and delta_bits(bits, (), downs) >= 0:
                raise ContractViolation(
                    "pure downflip accepted; the function is not strictly monotone")
            continue
        if delta_bits(bits, ups, downs) < 0:
            continue

        label = Label.UNCLASSIFIED
        if classify:
            if len(ups) == 1 and _single_upflip_is_bad(f, bits | 1 << ups[0], ups[0], threshold):
                label = Label.BAD
            else:
                label = Label.GOOD
        mask = 0
        for i in ups:
            mask |= 1 << i
        for i in downs:
            mask |= 1 << i
        new_ones = ones + len(ups) - len(downs)
        records.append(UpdateRecord(
            t=len(records),
            flips=FlipSet(tuple(ups), tuple(downs)),
            ones_before=ones,
            ones_after=new_ones,
            U=len(ups),
            D=len(downs),
            label=label,
            steps_waited=waited,
        ))
        bits ^= mask
        ones = new_ones
        waited = 0

    return Trajectory(start, tuple(records), bits == all_ones, total_steps)


@dataclass(frozen=True)
class PhaseStat:
    """Updates spent between first entry into S_k and first entry into S_{k-1},
    where S_k holds the points with at most 2^k - 1 zeros."""

    k: int
    entered_at: int
    updates: int
    steps: int


@dataclass(frozen=True)
class PhaseStats:
    phases: tuple[PhaseStat, ...]
    complete: bool


def phase_stats(traj: Trajectory) -> PhaseStats:
    """Phase decomposition from S_{floor(log2 n) - 1} down to S_1.

    Only phases the trajectory actually spent updates in are listed. Updates
    before the first entry into the top phase are not attributed to any
    phase. For unfinished trajectories the result is flagged incomplete and
    the last phase is truncated at the final record.
    """
    n = traj.n
    k_top = n.bit_length() - 2  # floor(log2 n) - 1
    if k_top < 1:
        return PhaseStats((), traj.reached_optimum)

    zeros = [n - traj.start.ones]
    for rec in traj.records:
        zeros.append(n - rec.ones_after)

    def first_entry(k: int):
        cap = (1 << k) - 1
        for t, z in enumerate(zeros):
            if z <= cap:
                return t
        return None

    phases = []
    for k in range(k_top, 0, -1):
        a = first_entry(k)
        if a is None:
            continue
        b = first_entry(k - 1)
        if b is None:
            b = traj.T
        if b > a:
            steps = sum(r.steps_waited for r in traj.records[a:b])
            phases.append(PhaseStat(k=k, entered_at=a, updates=b - a, steps=steps))
    return PhaseStats(tuple(phases), traj.reached_optimum)


@dataclass(frozen=True)
class DriftStats:
    """Conditional per-update aggregates over classified trajectories."""

    updates: int
    bad_updates: int
    mean_flips: Fraction | None          # E[U + D] over all updates
    mean_gain_good: Fraction | None      # E[U - D | good]
    mean_gain_bad: Fraction | None       # E[U - D | bad]


def drift_stats(trajs: Sequence[Trajectory]) -> DriftStats:
    total = bad = 0
    flips_sum = 0
    gain_good = gain_bad = 0
    good = 0
    for traj in trajs:
        for rec in traj.records:
            if rec.label is Label.UNCLASSIFIED:
                raise ContractViolation("drift_stats requires classified trajectories")
            total += 1
            flips_sum += rec.U + rec.D
            if rec.label is Label.BAD:
                bad += 1
                gain_bad += rec.U - rec.D
            else:
                good += 1
                gain_good += rec.U - rec.D
    return DriftStats(
        updates=total,
        bad_updates=bad,
        mean_flips=Fraction(flips_sum, total) if total else None,
        mean_gain_good=Fraction(gain_good, good) if good else None,
        mean_gain_bad=Fraction(gain_bad, bad) if bad else None,
    )
