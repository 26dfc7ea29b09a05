"""Binomial-log utilities, trajectory entropy bounds, and exact small-n oracles.

The oracles enumerate the full offspring distribution of a single round from
a fixed state in exact rational arithmetic, then report every conditional
quantity the drift and coding arguments rely on. Inequality checks built on
them tolerate 1e-9 of slack; the underlying probabilities carry no rounding
at all, and entropy-like sums only round when a log is taken.

All operations are pure; grid drivers may fan cells out across workers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import numpy as np
from scipy.special import gammaln

from .classifier import _single_upflip_is_bad, smaller_value_threshold
from .core import ContractViolation, ParameterError, SearchPoint, flip_probability
from .engine import Trajectory
from .fitness import MonotoneFunction

ORACLE_MAX_N = 14


def log2_binom(m: int, r: int) -> float:
    """log2 of the exact binomial coefficient; error is one rounding."""
    if r < 0 or m < 0 or r > m:
        raise ContractViolation(f"need 0 <= r <= m, got m={m}, r={r}")
    return math.log2(comb(m, r))


def _log2_fraction(fr: Fraction) -> float:
    return math.log2(fr.numerator) - math.log2(fr.denominator)


def entropy_lower_bound(traj: Trajectory) -> float:
    """Sum over updates of log2(C(#0_t, U_t) * C(#1_t + U_t, D_t)), in bits.

    A per-update information floor for the update chain: this many bits of
    choice are exercised by the flip positions alone.
    """
    n = traj.n
    return math.fsum(
        math.log2(comb(n - rec.ones_before, rec.U) * comb(rec.ones_before + rec.U, rec.D))
        for rec in traj.records
    )


@dataclass(frozen=True)
class TelescopingCheck:
    lhs: float
    rhs: float
    ok: bool


def telescoping_check(traj: Trajectory, tol: float = 1e-6) -> TelescopingCheck:
    """Backward-minus-forward binomial log terms collapse to log2 C(n, #1_0).

    Both sides are computed independently: the left as a float sum of
    per-update terms, the right as one binomial log.
    """
    if not traj.reached_optimum:
        raise ContractViolation("telescoping identity applies to finished trajectories")
    n = traj.n
    terms = []
    for rec in traj.records:
        fwd = comb(n - rec.ones_before, rec.U) * comb(rec.ones_before + rec.U, rec.D)
        bwd = comb(n - rec.ones_after, rec.D) * comb(rec.ones_after + rec.D, rec.U)
        terms.append(math.log2(bwd) - math.log2(fwd))
    lhs = math.fsum(terms)
    rhs = log2_binom(n, traj.start.ones)
    return TelescopingCheck(lhs, rhs, abs(lhs - rhs) <= tol)


@dataclass(frozen=True)
class UpdateDistribution:
    """Exact one-round offspring distribution conditioned on acceptance.

    probs maps accepted offspring (as bit ints, excluding the parent) to
    their unconditional round probabilities; p_keep is their total. An empty
    table with p_keep == 0 marks the absorbing all-ones state.
    """

    y: SearchPoint
    c: Fraction
    p_keep: Fraction
    probs: dict[int, Fraction]


def exact_update_distribution(y: SearchPoint, c, f: MonotoneFunction) -> UpdateDistribution:
    """Enumerate all 2^n offspring of one round from y, exactly."""
    n = y.n
    if n > ORACLE_MAX_N:
        raise ParameterError(f"exact enumeration is limited to n <= {ORACLE_MAX_N}")
    p = flip_probability(c, n)
    q = 1 - p
    p_pow = [p**h for h in range(n + 1)]
    q_pow = [q**h for h in range(n + 1)]
    fy = f.eval_bits(y.bits)
    probs: dict[int, Fraction] = {}
    for z in range(1 << n):
        if z == y.bits:
            continue
        if f.eval_bits(z) >= fy:
            h = (z ^ y.bits).bit_count()
            probs[z] = p_pow[h] * q_pow[n - h]
    return UpdateDistribution(y, Fraction(c), sum(probs.values(), Fraction(0)), probs)


@dataclass(frozen=True)
class OracleReport:
    """Exact conditional statistics of a single round from state y.

    Expectation fields are exact rationals; the two entropy-flavored fields
    are floats because logs are involved. Gain conditionals are None when
    the conditioning event has probability zero.
    """

    y: SearchPoint
    c: Fraction
    alpha: Fraction
    p_keep: Fraction
    e_flips_keep: Fraction          # E[U + D | keep]
    e_up_keep: Fraction             # E[U | keep]
    e_down_keep: Fraction           # E[D | keep]
    p_good: Fraction
    p_bad: Fraction
    e_gain_good: Fraction | None    # E[U - D | good]
    e_gain_bad: Fraction | None     # E[U - D | bad]
    entropy_bits: float             # H(Y' | keep)
    e_log2_binom_keep: float        # E[log2(C(#0,U) C(#1+U,D)) | keep]


def oracle_report(y: SearchPoint, c, f: MonotoneFunction, alpha) -> OracleReport:
    dist = exact_update_distribution(y, c, f)
    if dist.p_keep == 0:
        raise ParameterError("absorbing state: no acceptable offspring")
    n = y.n
    k = y.ones
    threshold = smaller_value_threshold(n, alpha)
    p_keep = dist.p_keep

    flips_acc = up_acc = down_acc = Fraction(0)
    p_good = p_bad = Fraction(0)
    gain_good = gain_bad = Fraction(0)
    entropy_terms = []
    logbinom_terms = []
    for z, pz in dist.probs.items():
        u = (z & ~y.bits).bit_count()
        d = (y.bits & ~z).bit_count()
        flips_acc += pz * (u + d)
        up_acc += pz * u
        down_acc += pz * d
        bad = False
        if u == 1:
            i = (z & ~y.bits).bit_length() - 1
            bad = _single_upflip_is_bad(f, y.bits | 1 << i, i, threshold)
        if bad:
            p_bad += pz
            gain_bad += pz * (u - d)
        else:
            p_good += pz
            gain_good += pz * (u - d)
        cond = pz / p_keep
        entropy_terms.append(-float(cond) * _log2_fraction(cond))
        logbinom_terms.append(float(cond) * math.log2(comb(n - k, u) * comb(k + u, d)))

    return OracleReport(
        y=y,
        c=dist.c,
        alpha=Fraction(alpha),
        p_keep=p_keep,
        e_flips_keep=flips_acc / p_keep,
        e_up_keep=up_acc / p_keep,
        e_down_keep=down_acc / p_keep,
        p_good=p_good,
        p_bad=p_bad,
        e_gain_good=gain_good / p_good if p_good else None,
        e_gain_bad=gain_bad / p_bad if p_bad else None,
        entropy_bits=math.fsum(entropy_terms),
        e_log2_binom_keep=math.fsum(logbinom_terms),
    )


@dataclass(frozen=True)
class AppendixBReport:
    """Where the weighted offspring-count product a_{u,d} * b_{u,d} peaks.

    a_{u,d} = (c/n)^(u+d) (1-c/n)^(n-u-d), b_{u,d} = C(n-k,u) C(k+u,d) over
    1 <= u <= n-k, 0 <= d <= k. bound_holds means the maximum over the whole
    grid is attained at (1,0) or (1,1). Decisive comparisons are exact; a
    float log screen only rules out cells more than `margin` bits below the
    peak. log2_table (optional) holds screen values in bits.
    """

    n: int
    k: int
    c: Fraction
    maximizer: tuple[int, int]
    bound_holds: bool
    log2_table: np.ndarray | None


def _exact_cell_numerator(n: int, k: int, x: int, y: int, u: int, d: int) -> int:
    # a_{u,d} b_{u,d} = N / y^n with N below; comparing N is comparing cells.
    return comb(n - k, u) * comb(k + u, d) * x**(u + d) * (y - x)**(n - u - d)


def verify_appendixB(n: int, k: int, c, keep_table: bool = False,
                     margin: float = 1e-4) -> AppendixBReport:
    """Locate and verify the (u,d) maximizer of a_{u,d} * b_{u,d}.

    The grid is screened with float logs (error orders of magnitude below
    `margin`), then every cell within `margin` bits of the float peak is
    compared exactly in integer arithmetic against the (1,0) and (1,1)
    cells.
    """
    if not 0 <= k < n:
        raise ParameterError(f"need 0 <= k < n, got k={k}, n={n}")
    p = flip_probability(c, n)
    if p >= 1:
        raise ParameterError("c must be strictly below n here")
    x, y = p.numerator, p.denominator  # c/n = x/y exactly

    u_vals = np.arange(1, n - k + 1)
    d_vals = np.arange(0, k + 1)
    log2_p = math.log2(x) - math.log2(y)
    log2_q = math.log2(y - x) - math.log2(y)
    ln2 = math.log(2.0)

    log2_cu = (gammaln(n - k + 1) - gammaln(u_vals + 1) - gammaln(n - k - u_vals + 1)) / ln2
    s = u_vals[:, None] + d_vals[None, :]
    log2_a = s * log2_p + (n - s) * log2_q
    ku = (k + u_vals)[:, None]
    log2_cd = (gammaln(ku + 1) - gammaln(d_vals[None, :] + 1) - gammaln(ku - d_vals[None, :] + 1)) / ln2
    table = log2_a + log2_cu[:, None] + log2_cd

    peak = float(table.max())
    suspects = {(int(u_vals[i]), int(d_vals[j])) for i, j in zip(*np.nonzero(table >= peak - margin))}
    suspects.add((1, 0))
    if k >= 1:
        suspects.add((1, 1))

    exact = {(u, d): _exact_cell_numerator(n, k, x, y, u, d) for u, d in sorted(suspects)}
    best_val = max(exact.values())
    maximizer = min(ud for ud, v in exact.items() if v == best_val)
    candidate_best = max(exact[(1, 0)], exact[(1, 1)] if k >= 1 else 0)
    return AppendixBReport(
        n=n,
        k=k,
        c=Fraction(c),
        maximizer=maximizer,
        bound_holds=best_val <= candidate_best,
        log2_table=table if keep_table else None,
    )
