import math
import statistics
from fractions import Fraction
from pathlib import Path

import pytest

from mclimb.classifier import Label
from mclimb.core import ContractViolation, ParameterError, RngSeed, SearchPoint
from mclimb.engine import RunConfig, default_max_steps, drift_stats, phase_stats, run
from mclimb.fitness import ExponentialWeights, OneMax, parse_function

from oracles import onemax_expected_updates_uniform_start

DATA = Path(__file__).parent / "data"
ONE = Fraction(1)


def test_start_at_optimum_is_absorbing():
    cfg = RunConfig(n=8, c=ONE, function="onemax", seed=RngSeed(0),
                    start=SearchPoint.all_ones(8))
    traj = run(cfg)
    assert traj.T == 0 and traj.total_steps == 0 and traj.reached_optimum


def test_golden_trajectory_n4():
    cfg = RunConfig(n=4, c=ONE, function="onemax", seed=RngSeed(2024), start="uniform")
    assert run(cfg).canonical_text() == (DATA / "golden_n4.txt").read_text(encoding="utf-8")


def test_run_is_deterministic():
    cfg = RunConfig(n=48, c=Fraction(6, 5), function="plugin:randlin1", seed=RngSeed(5))
    a, b = run(cfg), run(cfg)
    assert a.canonical_text() == b.canonical_text()


def test_classification_is_observation_only():
    base = dict(n=40, c=ONE, function="expw:2", seed=RngSeed(11))
    on = run(RunConfig(classify=True, **base))
    off = run(RunConfig(classify=False, **base))
    assert on.total_steps == off.total_steps
    assert on.start == off.start
    assert [r.flips for r in on.records] == [r.flips for r in off.records]
    assert all(r.label is Label.UNCLASSIFIED for r in off.records)
    assert all(r.label is not Label.UNCLASSIFIED for r in on.records)


def test_ones_bookkeeping_telescopes():
    cfg = RunConfig(n=64, c=ONE, function="onemax", seed=RngSeed(3))
    traj = run(cfg)
    assert traj.reached_optimum
    assert sum(r.U - r.D for r in traj.records) == 64 - traj.start.ones
    traj.validate()


def test_fitness_never_decreases_along_updates():
    f = parse_function("plugin:randlin2", 32)
    traj = run(RunConfig(n=32, c=Fraction(6, 5), function=f, seed=RngSeed(21)))
    pts = traj.points()
    for a, b, rec in zip(pts, pts[1:], traj.records):
        assert f.eval(b) >= f.eval(a)
        assert rec.U >= 1


def test_max_steps_cap_flags_unfinished():
    cfg = RunConfig(n=64, c=ONE, function="onemax", seed=RngSeed(1), max_steps=3)
    traj = run(cfg)
    assert not traj.reached_optimum
    assert traj.total_steps == 3


def test_default_max_steps_formula():
    assert default_max_steps(64) == int(1e4 * 64 * math.log2(65))


def test_steps_waited_accounts_every_round():
    traj = run(RunConfig(n=32, c=ONE, function="onemax", seed=RngSeed(13)))
    assert sum(r.steps_waited for r in traj.records) <= traj.total_steps
    assert all(r.steps_waited >= 1 for r in traj.records)


def test_rejects_mismatched_function_dimension():
    with pytest.raises(ParameterError):
        run(RunConfig(n=8, c=ONE, function=OneMax(9), seed=RngSeed(0)))


def test_non_monotone_plugin_detected_on_pure_downflip():
    from mclimb.fitness import CustomPlugin
    constant = CustomPlugin(16, lambda bits: 0, "flat")
    with pytest.raises(ContractViolation):
        # flat fitness accepts pure downflips, which the engine rejects as a
        # broken strict-monotonicity contract
        run(RunConfig(n=16, c=Fraction(2), function=constant, seed=RngSeed(2)))


def test_mean_updates_band_onemax_n64():
    n, reps = 64, 200
    trajs = [run(RunConfig(n=n, c=ONE, function="onemax", seed=RngSeed(s), classify=False))
             for s in range(reps)]
    mean_t = statistics.mean(t.T for t in trajs)
    se = statistics.stdev(t.T for t in trajs) / math.sqrt(reps)
    assert 0.2 * n <= mean_t <= 3 * n
    oracle = onemax_expected_updates_uniform_start(n, 1.0)
    assert abs(mean_t - oracle) <= 5 * se


def test_phase_stats_empty_for_all_ones_start():
    traj = run(RunConfig(n=16, c=ONE, function="onemax", seed=RngSeed(0),
                         start=SearchPoint.all_ones(16)))
    stats = phase_stats(traj)
    assert stats.phases == () and stats.complete


def test_phase_stats_partition_n8():
    # n=8: top phase k=2 (<= 3 zeros), then k=1 (<= 1 zero); a 3-zero start
    # is already inside S_2
    start = SearchPoint.from_indices(8, range(5))
    traj = run(RunConfig(n=8, c=ONE, function="onemax", seed=RngSeed(6), start=start))
    assert traj.reached_optimum
    stats = phase_stats(traj)
    ks = [p.k for p in stats.phases]
    assert set(ks) <= {1, 2} and ks == sorted(ks, reverse=True)
    assert stats.phases[0].k == 2 and stats.phases[0].entered_at == 0
    assert any(p.k == 1 for p in stats.phases)
    assert sum(p.updates for p in stats.phases) == traj.T
    assert sum(p.steps for p in stats.phases) <= traj.total_steps


def test_phase_updates_sum_from_top_entry():
    for seed in range(5):
        traj = run(RunConfig(n=256, c=ONE, function="onemax", seed=RngSeed(seed), classify=False))
        stats = phase_stats(traj)
        zeros = [256 - traj.start.ones] + [256 - r.ones_after for r in traj.records]
        k_top = 256 .bit_length() - 2
        first_top = next(t for t, z in enumerate(zeros) if z <= 2**k_top - 1)
        assert sum(p.updates for p in stats.phases) == traj.T - first_top


def test_phase_bound_against_fitted_constant():
    # aggregate per-phase update counts over a batch; every phase obeys
    # T_k <= 2 * beta * 2^k * log2(n) for the batch-fitted beta
    n, reps = 1024, 25
    totals: dict[int, float] = {}
    for seed in range(reps):
        traj = run(RunConfig(n=n, c=ONE, function="onemax", seed=RngSeed(seed), classify=False))
        for p in phase_stats(traj).phases:
            totals[p.k] = totals.get(p.k, 0.0) + p.updates / reps
    ratios = {k: t / (2**k * math.log2(n)) for k, t in totals.items()}
    beta = statistics.mean(ratios.values())
    assert all(r <= 2 * beta for r in ratios.values())


def test_drift_stats_onemax_all_good():
    trajs = [run(RunConfig(n=32, c=ONE, function="onemax", seed=RngSeed(s)))
             for s in range(20)]
    stats = drift_stats(trajs)
    assert stats.bad_updates == 0
    assert stats.mean_gain_bad is None
    assert stats.updates == sum(t.T for t in trajs)


def test_drift_stats_requires_labels():
    traj = run(RunConfig(n=16, c=ONE, function="onemax", seed=RngSeed(1), classify=False))
    with pytest.raises(ContractViolation):
        drift_stats([traj])


def test_drift_stats_empty_aggregate():
    traj = run(RunConfig(n=8, c=ONE, function="onemax", seed=RngSeed(0),
                         start=SearchPoint.all_ones(8)))
    stats = drift_stats([traj])
    assert stats.updates == 0 and stats.mean_flips is None


def test_mean_flips_within_keep_bound():
    # E[U+D | keep] <= (1+c)e^c, allowing 3 standard errors of sampling noise
    c = 1.0
    trajs = [run(RunConfig(n=64, c=ONE, function="onemax", seed=RngSeed(s)))
             for s in range(60)]
    flips = [r.U + r.D for t in trajs for r in t.records]
    se = statistics.stdev(flips) / math.sqrt(len(flips))
    assert statistics.mean(flips) <= (1 + c) * math.exp(c) + 3 * se


def test_bad_update_gain_floor_on_expw():
    # E[U-D | bad] >= 1-c up to sampling noise; heavy tails make bad updates
    # reasonably frequent here
    c = Fraction(11, 10)
    f = ExponentialWeights(64, 2)
    bad_gains = []
    for s in range(300):
        traj = run(RunConfig(n=64, c=c, function=f, seed=RngSeed(s), alpha=Fraction(1, 4)))
        bad_gains.extend(r.U - r.D for r in traj.records if r.label is Label.BAD)
    assert len(bad_gains) >= 30
    se = statistics.stdev(bad_gains) / math.sqrt(len(bad_gains))
    assert statistics.mean(bad_gains) >= float(1 - c) - 3 * se
