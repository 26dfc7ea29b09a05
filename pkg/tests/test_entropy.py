import math
import statistics
from fractions import Fraction
from math import comb

import pytest

from mclimb.classifier import smaller_value_threshold, _single_upflip_is_bad
from mclimb.core import ContractViolation, ParameterError, RngSeed, SearchPoint, SkipSampler
from mclimb.engine import RunConfig, run
from mclimb.entropy import (
    entropy_lower_bound,
    exact_update_distribution,
    log2_binom,
    oracle_report,
    telescoping_check,
    verify_appendixB,
    _exact_cell_numerator,
)
from mclimb.fitness import ExponentialWeights, OneMax, random_linear

from oracles import log2_binom_stirling

ONE = Fraction(1)


def test_log2_binom_trivia():
    assert log2_binom(7, 0) == 0.0
    assert abs(log2_binom(4, 2) - math.log2(6)) < 1e-12
    with pytest.raises(ContractViolation):
        log2_binom(3, 4)


def test_log2_binom_matches_stirling():
    assert abs(log2_binom(1000, 500) / log2_binom_stirling(1000, 500) - 1) < 1e-6
    assert abs(log2_binom(10**6, 1234) / log2_binom_stirling(10**6, 1234) - 1) < 1e-9


def _single_update_traj(n, ones_before, up, down, seed=0):
    from mclimb.classifier import Label
    from mclimb.core import FlipSet
    from mclimb.engine import Trajectory, UpdateRecord

    start = SearchPoint.from_indices(n, range(ones_before))
    # choose concrete indices: ups from zero-bits, downs from one-bits
    ups = tuple(range(ones_before, ones_before + up))
    downs = tuple(range(down))
    rec = UpdateRecord(t=0, flips=FlipSet(ups, downs), ones_before=ones_before,
                       ones_after=ones_before + up - down, U=up, D=down,
                       label=Label.GOOD, steps_waited=1)
    return Trajectory(start, (rec,), ones_before + up - down == n, 1)


def test_entropy_lower_bound_examples():
    empty = run(RunConfig(n=4, c=ONE, function="onemax", seed=RngSeed(0),
                          start=SearchPoint.all_ones(4)))
    assert entropy_lower_bound(empty) == 0.0
    # single update, one zero-bit, U=1, D=0: C(1,1)*C(k+1,0) = 1 -> 0 bits
    assert entropy_lower_bound(_single_update_traj(4, 3, 1, 0)) == 0.0
    # #0=4, #1=4, U=1, D=1 -> log2(4 * 5)
    assert abs(entropy_lower_bound(_single_update_traj(8, 4, 1, 1)) - math.log2(20)) < 1e-12


def test_telescoping_trivial_cases():
    empty = run(RunConfig(n=6, c=ONE, function="onemax", seed=RngSeed(0),
                          start=SearchPoint.all_ones(6)))
    chk = telescoping_check(empty)
    assert chk.lhs == chk.rhs == 0.0 and chk.ok
    single = _single_update_traj(5, 4, 1, 0)
    chk = telescoping_check(single)
    assert abs(chk.rhs - math.log2(5)) < 1e-12 and chk.ok


def test_telescoping_on_random_trajectories():
    for seed in range(100):
        traj = run(RunConfig(n=128, c=ONE, function="onemax", seed=RngSeed(seed), classify=False))
        assert traj.reached_optimum
        assert telescoping_check(traj).ok


def test_telescoping_needs_finished_trajectory():
    traj = run(RunConfig(n=64, c=ONE, function="onemax", seed=RngSeed(0), max_steps=2))
    with pytest.raises(ContractViolation):
        telescoping_check(traj)


def test_exact_distribution_all_zeros_n3():
    dist = exact_update_distribution(SearchPoint.zeros(3), 1, OneMax(3))
    assert dist.p_keep == Fraction(19, 27)
    assert len(dist.probs) == 7  # every non-parent string is acceptable here


def test_exact_distribution_n2_by_hand():
    dist = exact_update_distribution(SearchPoint.from_string("10"), 1, OneMax(2))
    assert dist.probs == {0b10: Fraction(1, 4), 0b11: Fraction(1, 4)}
    assert dist.p_keep == Fraction(1, 2)


def test_exact_distribution_absorbing():
    dist = exact_update_distribution(SearchPoint.all_ones(4), 1, OneMax(4))
    assert dist.p_keep == 0 and not dist.probs
    with pytest.raises(ParameterError):
        oracle_report(SearchPoint.all_ones(4), 1, OneMax(4), Fraction(1, 4))


def test_exact_distribution_size_guard():
    with pytest.raises(ParameterError):
        exact_update_distribution(SearchPoint.zeros(15), 1, OneMax(15))


def test_oracle_probabilities_partition():
    f = random_linear(8, 2)
    y = SearchPoint.from_indices(8, range(5))
    rep = oracle_report(y, Fraction(13, 10), f, Fraction(1, 4))
    assert rep.p_good + rep.p_bad == rep.p_keep
    assert 0 < rep.p_keep <= 1
    assert rep.e_up_keep >= 1


def test_oracle_onemax_by_direct_sum():
    # recompute E[U+D | keep] from the raw distribution as a second route
    y = SearchPoint.from_indices(6, range(3))
    f = OneMax(6)
    dist = exact_update_distribution(y, Fraction(1, 2), f)
    num = sum(p * ((z ^ y.bits).bit_count()) for z, p in dist.probs.items())
    rep = oracle_report(y, Fraction(1, 2), f, Fraction(1, 4))
    assert rep.e_flips_keep == num / dist.p_keep


def test_oracle_grid_inequalities_small():
    # a fast sub-grid of the acceptance criterion: every single-round
    # inequality holds with 1e-9 slack
    slack = 1e-9
    for n in (3, 5, 8):
        fns = [OneMax(n), random_linear(n, 1), ExponentialWeights(n, 2)]
        for f in fns:
            for k in range(1, n):
                y = SearchPoint.from_bits(n, (1 << k) - 1)
                for c in (Fraction(1, 2), ONE, Fraction(13, 10)):
                    rep = oracle_report(y, c, f, Fraction(1, 4))
                    cf = float(c)
                    assert float(rep.e_flips_keep) <= (1 + cf) * math.exp(cf) + slack
                    assert rep.entropy_bits >= rep.e_log2_binom_keep - slack
                    assert rep.e_down_keep <= c * k / n  # exact comparison
                    assert rep.e_up_keep >= 1


def test_oracle_keep_probability_floor():
    # p_keep >= ((n-k)/n) * c * e^{-c} holds on the grid for n >= 8
    for n in (8, 10):
        f = random_linear(n, 4)
        for k in range(1, n):
            y = SearchPoint.from_bits(n, (1 << k) - 1)
            for c in (Fraction(1, 2), ONE, Fraction(13, 10)):
                rep = oracle_report(y, c, f, Fraction(1, 4))
                floor = (n - k) / n * float(c) * math.exp(-float(c))
                assert float(rep.p_keep) >= floor - 1e-12


def test_oracle_gain_conditionals_floors():
    for alpha in (Fraction(1, 10), Fraction(1, 4), Fraction(1, 2)):
        cs = [c for c in (Fraction(1, 2), ONE, Fraction(13, 10)) if c <= 1 / (1 - alpha)]
        for n in (4, 6, 9):
            for f in (OneMax(n), ExponentialWeights(n, 2)):
                for k in range(1, n):
                    y = SearchPoint.from_bits(n, (1 << k) - 1)
                    for c in cs:
                        rep = oracle_report(y, c, f, alpha)
                        if rep.e_gain_bad is not None:
                            assert float(rep.e_gain_bad) >= float(1 - c) - 1e-9
                        if rep.e_gain_good is not None:
                            floor = ((1 - float(c) / n) ** (float(alpha) * n)
                                     * (1 - (1 - float(alpha)) * float(c)))
                            assert float(rep.e_gain_good) >= floor - 1e-9


def test_empirical_engine_matches_oracle():
    # frozen state, many single rounds: engine-side statistics converge to
    # the exact oracle values within 4 standard errors
    n, k = 10, 5
    c = ONE
    f = OneMax(n)
    y = SearchPoint.from_bits(n, (1 << k) - 1)
    rep = oracle_report(y, c, f, Fraction(1, 4))
    rng = RngSeed(123).generator()
    sampler = SkipSampler(n, c)
    kept = []
    proposals = 0
    fy = f.eval(y)
    while len(kept) < 10**5:
        fs = sampler.sample(y, rng)
        proposals += 1
        if fs.is_empty():
            continue
        from mclimb.core import apply
        if f.eval(apply(y, fs)) >= fy:
            kept.append((len(fs.up), len(fs.down)))
    p_hat = len(kept) / proposals
    se_p = math.sqrt(p_hat * (1 - p_hat) / proposals)
    assert abs(p_hat - float(rep.p_keep)) <= 4 * se_p
    flips = [u + d for u, d in kept]
    se = statistics.stdev(flips) / math.sqrt(len(flips))
    assert abs(statistics.mean(flips) - float(rep.e_flips_keep)) <= 4 * se
    downs = [d for _, d in kept]
    se_d = statistics.stdev(downs) / math.sqrt(len(downs))
    assert abs(statistics.mean(downs) - float(rep.e_down_keep)) <= 4 * se_d


def _brute_force_max_cell(n, k, c):
    p = Fraction(c) / n
    x, y = p.numerator, p.denominator
    best, cell = None, None
    for u in range(1, n - k + 1):
        for d in range(0, k + 1):
            v = _exact_cell_numerator(n, k, x, y, u, d)
            if best is None or v > best:
                best, cell = v, (u, d)
    return best, cell


@pytest.mark.parametrize("c", [Fraction(1, 2), ONE, Fraction(13, 10)])
def test_appendix_b_screen_agrees_with_brute_force_n20(c):
    for k in range(20):
        rep = verify_appendixB(20, k, c)
        best, _ = _brute_force_max_cell(20, k, c)
        p = Fraction(c) / 20
        x, y = p.numerator, p.denominator
        cands = [_exact_cell_numerator(20, k, x, y, 1, 0)]
        if k >= 1:
            cands.append(_exact_cell_numerator(20, k, x, y, 1, 1))
        assert rep.bound_holds == (best <= max(cands))
        assert rep.bound_holds


def test_appendix_b_n100_midpoint():
    rep = verify_appendixB(100, 50, ONE)
    assert rep.bound_holds
    assert rep.maximizer in ((1, 0), (1, 1))


def test_appendix_b_d0_column_concave():
    # a_{u,0} b_{u,0} never beats the u=1 cell for c <= 1
    for c in (Fraction(1, 2), ONE):
        for n in (20, 40):
            for k in (0, n // 2, n - 1):
                p = Fraction(c) / n
                x, y = p.numerator, p.denominator
                head = _exact_cell_numerator(n, k, x, y, 1, 0)
                for u in range(2, n - k + 1):
                    assert _exact_cell_numerator(n, k, x, y, u, 0) <= head


def test_appendix_b_guards():
    with pytest.raises(ParameterError):
        verify_appendixB(10, 10, ONE)
    with pytest.raises(ParameterError):
        verify_appendixB(4, 1, 4)  # c == n not allowed here
