"""Tests for spinglass_lab/rem.py — the REM_x point process, its order statistics,
multiplicative evolution and the quasi-stationarity harness."""

import json
import math

import numpy as np
import pytest

from spinglass_lab.exceptions import InvalidInput
from spinglass_lab.laws import LogNormal, PointMass, TwoPoint
from spinglass_lab.rem import (
    PointConfiguration,
    addition_law_test,
    coincidence_probability,
    evolve,
    occupation_counts,
    order_statistic_law_check,
    partition_moment_stability,
    partition_sum,
    per_rank_ks,
    power_sum_trend,
    quasi_stationarity_test,
    rem_partition_moment,
    sample_rem,
    sample_rem_top,
    tilted_increment_test,
    truncation_tail,
)
from spinglass_lab.utils import SeedSpec


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------


def test_mean_point_count():
    rng = SeedSpec(0).generator()
    counts = [len(sample_rem(0.5, 0.01, rng)) for _ in range(10_000)]
    assert np.mean(counts) == pytest.approx(10.0, abs=3.0 * math.sqrt(10.0 / 10_000))


def test_points_strictly_descending():
    cfg = sample_rem(0.5, 1e-3, 1)
    assert np.all(np.diff(cfg.points) < 0.0)
    assert np.all(cfg.points > cfg.epsilon)


def test_void_probability_of_the_maximum():
    rng = SeedSpec(2).generator()
    below = [len(c) == 0 or c.points[0] <= 1.0 for c in (sample_rem(0.5, 0.01, rng) for _ in range(10_000))]
    assert np.mean(below) == pytest.approx(math.exp(-1.0), abs=0.02)


def test_memory_guard_suggests_larger_epsilon():
    with pytest.raises(InvalidInput) as exc_info:
        sample_rem(0.5, 1e-15, 0)
    assert "use epsilon >=" in exc_info.value.detail


def test_invalid_exponent():
    with pytest.raises(InvalidInput):
        sample_rem(1.0, 0.1, 0)


def test_top_sampler_keeps_threshold_below_points():
    cfg = sample_rem_top(0.5, 50, 3)
    assert len(cfg) == 50
    assert cfg.points[-1] > cfg.epsilon


def test_configuration_rejects_unsorted_points():
    with pytest.raises(InvalidInput):
        PointConfiguration(0.5, 0.1, np.array([0.5, 0.9]))


# ---------------------------------------------------------------------------
# Partition sums and moments
# ---------------------------------------------------------------------------


def test_empty_configuration_partition_sum():
    result = partition_sum(PointConfiguration(0.5, 1e-4, np.array([])))
    assert result.z == 0.0
    assert result.tail_bound == pytest.approx(1e-2)


def test_truncation_tail_closed_form():
    assert truncation_tail(0.5, 1e-4) == pytest.approx(1e-2)


def test_partition_moment_at_zero_power():
    assert rem_partition_moment(0.5, 0.0) == pytest.approx(1.0)


def test_partition_moment_infinite_beyond_x():
    with pytest.raises(InvalidInput) as exc_info:
        rem_partition_moment(0.5, 0.5)
    assert "finite only" in exc_info.value.detail


def test_coincidence_probability_of_equal_points():
    assert coincidence_probability(np.array([2.0, 2.0])) == pytest.approx(0.5)


def test_occupation_counts_are_independent_poisson():
    result = occupation_counts(0.5, 1e-3, [0.01, 0.1, 1.0], draws=2000, seed=0)
    expected = [10.0 - math.sqrt(10.0), math.sqrt(10.0) - 1.0, 1.0]
    assert np.allclose(result["expected"], expected)
    sigma = np.sqrt(np.asarray(expected) / 2000)
    assert np.all(np.abs(result["mean"] - expected) <= 4.0 * sigma)
    off_diagonal = result["correlation"][~np.eye(3, dtype=bool)]
    assert np.all(np.abs(off_diagonal) < 0.1)


def test_occupation_edges_must_start_above_epsilon():
    with pytest.raises(InvalidInput):
        occupation_counts(0.5, 0.1, [0.05, 1.0], draws=1)


def test_small_power_sums_grow_as_epsilon_shrinks():
    trend = power_sum_trend(0.5, [1e-2, 1e-3], [0.1], draws=500, seed=0)[0.1]
    # E sum xi^v = x eps^(v - x) / (x - v) for v < x
    assert trend[0] == pytest.approx(1.25 * 0.01 ** -0.4, rel=0.1)
    assert trend[1] == pytest.approx(1.25 * 0.001 ** -0.4, rel=0.1)


def test_low_partition_moment_is_stable():
    result = partition_moment_stability(0.5, 0.1, 1e-4, draws=1000, seed=0)
    assert 0.9 < result["ratio"] < 1.1
    assert result["full"] == pytest.approx(rem_partition_moment(0.5, 0.1), rel=0.05)


def test_addition_law():
    result = addition_law_test(0.5, 1e-6, draws=300, seed=0)
    assert result["passed"]


# ---------------------------------------------------------------------------
# Order statistics
# ---------------------------------------------------------------------------


def test_order_statistic_law():
    report = order_statistic_law_check(0.5, 1e-5, n_max=100, draws=2000, seed=0)
    assert not report.partial
    assert 0.9 <= report.scaled_means[-1] <= 1.1
    assert report.max_transform_mean.within(1.0, sigmas=4.0)


def test_order_statistic_partial_trajectory_is_flagged(caplog):
    with caplog.at_level("WARNING"):
        report = order_statistic_law_check(0.5, 0.01, n_max=50, draws=20, seed=0)
    assert report.partial
    assert "partial" in caplog.text


# ---------------------------------------------------------------------------
# Evolution and quasi-stationarity
# ---------------------------------------------------------------------------


def test_point_mass_evolution_scales_points():
    cfg = sample_rem(0.5, 1e-3, 4)
    evolved, gamma = evolve(cfg, PointMass(3.0), 5)
    assert np.allclose(evolved.points, 3.0 * cfg.points)
    assert np.all(gamma == 3.0)


def test_evolution_carries_the_missing_tail_mass():
    cfg = sample_rem(0.5, 1e-3, 4)
    evolved, _ = evolve(cfg, PointMass(3.0), 5)
    assert evolved.tail_mass == pytest.approx(3.0 * truncation_tail(0.5, 1e-3))
    assert partition_sum(evolved).tail_bound == pytest.approx(evolved.tail_mass)
    twice, _ = evolve(evolved, PointMass(2.0), 6)
    assert twice.tail_mass == pytest.approx(6.0 * truncation_tail(0.5, 1e-3))


def test_tail_mass_survives_json():
    cfg = PointConfiguration(0.5, 0.1, np.array([0.9, 0.5]), tail_mass=0.25)
    restored = PointConfiguration.from_dict(json.loads(cfg.to_json()))
    assert restored.tail_mass == 0.25
    assert PointConfiguration.from_dict(PointConfiguration(0.5, 0.1, np.array([0.9])).to_dict()).tail_mass is None


def test_negative_tail_mass_rejected():
    with pytest.raises(InvalidInput):
        PointConfiguration(0.5, 0.1, np.array([0.9]), tail_mass=-1.0)


def test_evolution_rejects_nonpositive_increments():
    class Broken(PointMass):
        def sample(self, rng, size):
            return np.zeros(size)

    with pytest.raises(InvalidInput) as exc_info:
        evolve(sample_rem(0.5, 1e-2, 0), Broken(1.0), 0)
    assert "nonpositive" in exc_info.value.detail


def test_per_rank_ks_identical_samples():
    data = np.random.default_rng(0).random((50, 3))
    report = per_rank_ks("normalized", data, data)
    assert report.passed
    assert report.to_dict()["rank"] == [1, 2, 3]


def test_point_mass_is_quasi_stationary():
    report = quasi_stationarity_test(0.5, PointMass(2.0), 1e-3, top_n=5, trials=300, seed=0)
    assert report.passed


def test_lognormal_normalized_is_quasi_stationary():
    report = quasi_stationarity_test(0.5, LogNormal(0.5), 1e-3, top_n=5, trials=300, seed=1)
    assert report.passed


def test_uncorrected_comparison_fails():
    report = quasi_stationarity_test(0.5, LogNormal(1.0), 1e-4, top_n=20, trials=300, seed=2, mode="uncorrected")
    assert not report.passed


@pytest.mark.slow
def test_lognormal_quasi_stationarity_full_ensemble():
    report = quasi_stationarity_test(0.5, LogNormal(0.5), 1e-4, top_n=20, trials=2000, seed=0, threads=4)
    assert report.passed
    corrected = quasi_stationarity_test(0.5, LogNormal(0.5), 1e-4, top_n=20, trials=2000, seed=0, mode="corrected", threads=4)
    assert corrected.passed


def test_too_few_points_for_top_n():
    with pytest.raises(InvalidInput) as exc_info:
        quasi_stationarity_test(0.5, PointMass(1.0), 1e-3, top_n=20, trials=10)
    assert "decrease epsilon" in exc_info.value.detail


def test_unknown_mode():
    with pytest.raises(InvalidInput):
        quasi_stationarity_test(0.5, PointMass(1.0), 1e-4, top_n=5, trials=10, mode="raw")


def test_tilt_of_two_point_law():
    report = tilted_increment_test(0.5, TwoPoint(1.0, 2.0, 0.5), 1e-3, top_n=10, trials=500, seed=0)
    assert report.expected_mass[1] == pytest.approx(math.sqrt(2.0) / (1.0 + math.sqrt(2.0)))
    assert report.empirical_mass[1] == pytest.approx(report.expected_mass[1], abs=0.02)


def test_tilt_of_point_mass_trivially_passes():
    report = tilted_increment_test(0.5, PointMass(2.0), 1e-3, top_n=5, trials=50, seed=0)
    assert report.p_value == 1.0
    assert report.rank_correlation == 0.0
    assert report.passed
