"""Tests for spinglass_lab/utils.py — seeding, estimates, quadrature and thread fan-out."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinglass_lab.exceptions import InvalidInput, NumericalFailure
from spinglass_lab.utils import (
    UINT64_MAX,
    Estimate,
    SeedSpec,
    as_generator,
    difference,
    gauss_hermite,
    gauss_legendre,
    log_cosh,
    parallel_map,
)


# ---------------------------------------------------------------------------
# SeedSpec
# ---------------------------------------------------------------------------


def test_seed_same_task_gives_same_stream():
    a = SeedSpec(42).generator(3, 1).standard_normal(5)
    b = SeedSpec(42).generator(3, 1).standard_normal(5)
    assert np.array_equal(a, b)


def test_seed_different_tasks_give_different_streams():
    a = SeedSpec(42).generator(3, 1).standard_normal(5)
    b = SeedSpec(42).generator(3, 2).standard_normal(5)
    assert not np.array_equal(a, b)


def test_seed_different_roots_give_different_streams():
    a = SeedSpec(1).generator(0).random(4)
    b = SeedSpec(2).generator(0).random(4)
    assert not np.array_equal(a, b)


def test_seed_accepts_full_64_bit_range():
    SeedSpec(UINT64_MAX).generator(0).random()


def test_seed_negative_raises_invalid_input():
    with pytest.raises(InvalidInput) as exc_info:
        SeedSpec(-1)
    assert exc_info.value.status_code == 2
    assert "64 bits" in exc_info.value.detail


def test_seed_too_large_raises():
    with pytest.raises(InvalidInput):
        SeedSpec(UINT64_MAX + 1)


def test_seed_bool_rejected():
    with pytest.raises(InvalidInput):
        SeedSpec(True)


def test_seed_negative_task_key_raises():
    with pytest.raises(InvalidInput):
        SeedSpec(0).generator(-1)


def test_child_seed_is_deterministic_and_distinct():
    root = SeedSpec(7)
    assert root.child(0) == root.child(0)
    assert root.child(0) != root.child(1)
    assert 0 <= root.child(5).root_seed <= UINT64_MAX


def test_as_generator_accepts_int_seed_and_generator():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    assert np.array_equal(as_generator(5).random(3), SeedSpec(5).generator().random(3))


def test_as_generator_rejects_other_types():
    with pytest.raises(InvalidInput):
        as_generator("seed")


# ---------------------------------------------------------------------------
# parallel_map
# ---------------------------------------------------------------------------


def test_parallel_map_result_order_does_not_depend_on_threads():
    def draw(i):
        return float(SeedSpec(11).generator(i).standard_normal())

    serial = parallel_map(draw, range(16), threads=1)
    pooled = parallel_map(draw, range(16), threads=4)
    assert serial == pooled


def test_parallel_map_empty():
    assert parallel_map(lambda x: x, [], threads=3) == []


# ---------------------------------------------------------------------------
# Estimate
# ---------------------------------------------------------------------------


def test_estimate_constant_samples_are_exact():
    est = Estimate.from_samples([0.5, 0.5, 0.5])
    assert est.value == 0.5
    assert est.stderr == 0.0
    assert est.samples == 3


def test_estimate_mean_and_stderr():
    est = Estimate.from_samples([1.0, 2.0, 3.0, 4.0])
    assert est.value == pytest.approx(2.5)
    assert est.stderr == pytest.approx(np.std([1, 2, 3, 4], ddof=1) / 2.0)


def test_estimate_empty_raises_invalid_input():
    with pytest.raises(InvalidInput) as exc_info:
        Estimate.from_samples([])
    assert "zero samples" in exc_info.value.detail


def test_estimate_nonfinite_raises_numerical_failure():
    with pytest.raises(NumericalFailure) as exc_info:
        Estimate.from_samples([1.0, float("nan")])
    assert exc_info.value.status_code == 3


def test_estimate_within():
    est = Estimate(1.0, 0.1, 10)
    assert est.within(1.25)
    assert not est.within(1.5)
    assert est.within(1.5, slack=0.3)


def test_difference_combines_errors():
    d = difference(Estimate(3.0, 0.3, 10), Estimate(1.0, 0.4, 20))
    assert d.value == pytest.approx(2.0)
    assert d.stderr == pytest.approx(0.5)
    assert d.samples == 10


# ---------------------------------------------------------------------------
# Numerics
# ---------------------------------------------------------------------------


def test_log_cosh_large_argument_does_not_overflow():
    assert log_cosh(1000.0) == pytest.approx(1000.0 - math.log(2.0))
    assert log_cosh(-1000.0) == pytest.approx(1000.0 - math.log(2.0))


@given(st.floats(min_value=-30.0, max_value=30.0))
@settings(max_examples=100, deadline=None)
def test_log_cosh_matches_direct_formula(u):
    assert log_cosh(u) == pytest.approx(math.log(math.cosh(u)), abs=1e-12)


def test_gauss_hermite_integrates_standard_normal_moments():
    nodes, weights = gauss_hermite(40)
    assert weights.sum() == pytest.approx(1.0)
    assert float(nodes @ weights) == pytest.approx(0.0, abs=1e-12)
    assert float(nodes**2 @ weights) == pytest.approx(1.0)
    assert float(nodes**4 @ weights) == pytest.approx(3.0)


def test_gauss_hermite_arrays_are_read_only():
    nodes, _ = gauss_hermite(20)
    with pytest.raises(ValueError):
        nodes[0] = 1.0


def test_gauss_hermite_bad_order_raises():
    with pytest.raises(InvalidInput):
        gauss_hermite(0)


def test_gauss_legendre_integrates_polynomial():
    nodes, weights = gauss_legendre(8)
    assert float(nodes**2 @ weights) == pytest.approx(1.0 / 3.0)
    assert weights.sum() == pytest.approx(1.0)
