import math

import numpy as np
import pytest

from nulgi.dataio import Dataset, EXPERIMENTS, ExperimentMeta, NoiseModel, generate_synthetic
from nulgi.errors import ComparisonError, DataError, DomainError
from nulgi.gksl import DichotomicPvm, equiprobable_plus_state, plus_probabilities, random_incoherent_generator
from nulgi.lgi import DataPoint, TriadConfig, count_violations, find_correlated_triads, violates
from nulgi.montecarlo import (
    RunConfig,
    TrialDistribution,
    compare,
    replication_rng,
    resample,
    run_trials,
    theoretical_substitute,
    violation_count,
)
from nulgi.oscillation import BEST_FIT, FlavorChannel, bin_averaged_probability, oscillation_period, oscillation_probability

from test_oscillation import _quad_mean


def _dataset(rows, **kw):
    return Dataset(tuple(DataPoint(*r) for r in rows), **kw)


def dense_dataset(dp_scale=1.0):
    period = oscillation_period(BEST_FIT, "31")
    meta = ExperimentMeta((735.0, 735.0), (0.5, 50.0), "accelerator")
    data = generate_synthetic(
        BEST_FIT, meta, 50, NoiseModel(0.02, 0.02, perturb=False), channel=FlavorChannel(1, 1), t_range=(period / 50, period)
    )
    return data.with_points([DataPoint(p.t, p.p, p.dt, p.dp * dp_scale) for p in data.points])


def test_resample_zero_variance_is_identity():
    data = _dataset([(1.0, 0.9, 0, 0), (2.0, 0.5, 0, 0), (3.0, 0.2, 0, 0)])
    pseudo = resample(data, replication_rng(1, 0))
    assert [(p.tau, p.pi) for p in pseudo] == [(1.0, 0.9), (2.0, 0.5), (3.0, 0.2)]


def test_resample_deterministic():
    data = dense_dataset()
    a = resample(data, replication_rng(7, 3))
    b = resample(data, replication_rng(7, 3))
    c = resample(data, replication_rng(7, 4))
    assert a == b
    assert a != c


def test_resample_moments():
    n = 100_000
    data = _dataset([(1.0, 0.5, 0.1, 0.05)] * n)
    pseudo = np.array(resample(data, replication_rng(99, 0)))
    tau, pi = pseudo[:, 0], pseudo[:, 1]
    assert abs(tau.mean() - 1.0) < 4 * 0.1 / math.sqrt(n)
    assert abs(pi.mean() - 0.5) < 4 * 0.05 / math.sqrt(n)
    assert tau.std() == pytest.approx(0.1, rel=0.05)
    assert pi.std() == pytest.approx(0.05, rel=0.05)


def test_resample_redraws_nonpositive_times():
    data = _dataset([(0.1, 0.5, 0.2, 0.0)] * 2000)
    pseudo = resample(data, replication_rng(5, 0))
    assert min(p.tau for p in pseudo) > 0


class _AlwaysLow:
    """Generator stub whose normal draws always push t below zero."""

    def standard_normal(self, size):
        return np.full(size, -10.0)


def test_resample_gives_up_after_repeated_rejections():
    # with t > 0 a real draw is positive at least half the time, so force the failure path
    data = _dataset([(1.0, 0.5, 1.0, 0.0)])
    with pytest.raises(DataError, match="non-positive"):
        resample(data, _AlwaysLow())


def test_resample_clamp_policy():
    data = _dataset([(1.0, 0.99, 0.0, 0.5)] * 200)
    raw = resample(data, replication_rng(1, 0))
    clipped = resample(data, replication_rng(1, 0), clamp="clip")
    assert max(p.pi for p in raw) > 1.0
    assert max(p.pi for p in clipped) <= 1.0


def test_violation_count_examples():
    assert violation_count([]) == 0
    assert violation_count([(1, 0.9), (1.02, 0.9), (2, 0.5)], TriadConfig(0.05, allow_self_pair=False)) == 1
    # with self-pairs the 0-0 and 1-1 triads also qualify
    assert violation_count([(1, 0.9), (1.02, 0.9), (2, 0.5)], TriadConfig(0.05)) == 3


def test_noiseless_dephasing_dataset_has_no_violations(rng):
    pvm = DichotomicPvm.from_indices(2, [0])
    gen, _, _ = random_incoherent_generator(rng, pvm)
    t = np.arange(1, 31) * 0.1
    p = plus_probabilities(gen, pvm, equiprobable_plus_state(pvm), t)
    assert violation_count(list(zip(t, p)), TriadConfig(1e-9)) == 0


def test_zero_variance_matches_noiseless_count():
    data = dense_dataset(0.0)
    data = data.with_points([DataPoint(p.t, p.p, 0.0, 0.0) for p in data.points])
    dist = run_trials(data, RunConfig(20))
    expected = count_violations(data.t, data.p)
    assert dist.histogram == {expected: 20}
    assert dist.sigma == 0.0 and dist.confidence is None


def test_distribution_moments_from_histogram():
    counts = [3, 5, 5, 9, 0, 5]
    dist = TrialDistribution.from_counts(counts)
    assert dist.histogram == {0: 1, 3: 1, 5: 3, 9: 1}
    assert dist.mu == sum(counts) / 6
    assert dist.sigma == pytest.approx(np.std(counts), rel=1e-15)
    assert dist.confidence == dist.mu / dist.sigma
    assert dist.replications == 6


def test_run_trials_deterministic_and_parallel_independent():
    data = dense_dataset()
    cfg = RunConfig(300, seed=11)
    a = run_trials(data, cfg)
    b = run_trials(data, cfg)
    c = run_trials(data, cfg, workers=4)
    assert a == b == c
    assert run_trials(data, RunConfig(300, seed=12)) != a


def test_run_config_validation():
    with pytest.raises(DomainError):
        RunConfig(0)
    with pytest.raises(DomainError):
        RunConfig(10, clamp="wrap")
    with pytest.raises(DomainError):
        RunConfig(10, seed=-1)


def test_dense_coherent_dataset_confidence():
    dist = run_trials(dense_dataset(), RunConfig(1000))
    assert dist.confidence > 3


def test_larger_survival_errors_reduce_confidence():
    base = run_trials(dense_dataset(), RunConfig(1000))
    noisy = run_trials(dense_dataset(10.0), RunConfig(1000))
    assert noisy.confidence < base.confidence


def test_theoretical_substitute_point_values():
    data = _dataset([(100.0, 0.5, 0.0, 0.02), (900.0, 0.5, 0.0, 0.02), (1e-9, 0.5, 0.0, 0.02)])
    ch = FlavorChannel(0, 0, True)
    data = data.with_points(data.points, channel=ch)
    sub = theoretical_substitute(data, BEST_FIT)
    for old, new in zip(data.points, sub.points):
        assert (new.t, new.dt, new.dp) == (old.t, old.dt, old.dp)
        assert new.p == oscillation_probability(BEST_FIT, ch, old.t)
    assert sub.points[-1].p == pytest.approx(1.0, abs=1e-12)
    assert sub.label == data.label and sub.channel == ch


def test_theoretical_substitute_kamland_scale_matches_quadrature():
    meta, ch = EXPERIMENTS["kamland"]
    data = generate_synthetic(BEST_FIT, meta, 6, NoiseModel(0.07, 0.04, perturb=False), channel=ch)
    sub = theoretical_substitute(data, BEST_FIT)
    for pt, new in zip(data.points, sub.points):
        ref = _quad_mean(BEST_FIT, ch, pt.t - pt.dt, pt.t + pt.dt)
        assert abs(new.p - ref) / ref < 1e-6


def test_compare():
    dist = TrialDistribution.from_counts([1, 2, 3, 4])
    assert compare(dist, dist) == 1.0
    flat = TrialDistribution.from_counts([2, 2])
    with pytest.raises(ComparisonError):
        compare(dist, flat)
    with pytest.raises(ComparisonError):
        compare(flat, dist)


def test_self_comparison_within_monte_carlo_band():
    meta, ch = EXPERIMENTS["minos"]
    data = generate_synthetic(BEST_FIT, meta, 20, NoiseModel(0.1, 0.05, perturb=False), channel=ch)
    # the dataset already equals its (point) prediction; substitution only flattens it
    exp_d = run_trials(data, RunConfig(2000, theoretical=True), BEST_FIT, stream=0)
    th_d = run_trials(data, RunConfig(2000, theoretical=True), BEST_FIT, stream=1)
    assert compare(exp_d, th_d) == pytest.approx(1.0, abs=0.1)


def test_dephased_dataset_ratio_below_one():
    meta, ch = EXPERIMENTS["kamland"]
    data = generate_synthetic(BEST_FIT, meta, 17, NoiseModel(0.06, 0.04), 3e-5, channel=ch, seed=3)
    e = run_trials(data, RunConfig(1000))
    t = run_trials(data, RunConfig(1000, theoretical=True), BEST_FIT, stream=1)
    assert compare(e, t) < 1
