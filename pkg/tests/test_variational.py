"""Tests for spinglass_lab/variational.py — encoding, the RS fixed point and the optimizer."""

import numpy as np
import pytest
from scipy.optimize import brentq

from spinglass_lab.core import OrderParameter
from spinglass_lab.exceptions import InvalidInput
from spinglass_lab.rost import guerra_gap
from spinglass_lab.variational import (
    _tanh_square_mean,
    decode,
    encode,
    grid_search,
    optimize,
    rs_stationary_point,
)
from spinglass_lab.utils import LN2


def test_encoding_round_trip():
    params = OrderParameter((0.3, 0.7), (0.2, 0.6))
    restored = decode(encode(params, 2), 2)
    assert np.allclose(restored.x, params.x)
    assert np.allclose(restored.q, params.q)


def test_encoding_pads_missing_levels():
    theta = encode(OrderParameter((0.4,), (0.3,)), 3)
    assert theta.shape == (6,)
    assert decode(theta, 3).k == 3


def test_zero_level_decode_is_replica_symmetric():
    params = decode([0.0], 0)
    assert params.x == (1.0,)
    assert params.q == (pytest.approx(0.5),)


def test_rs_point_vanishes_at_high_temperature():
    assert rs_stationary_point(0.5, 0.0) == 0.0
    assert rs_stationary_point(1.0, 0.0) == 0.0


@pytest.mark.parametrize("beta, h", [(2.0, 0.0), (0.5, 0.3)])
def test_rs_point_matches_bisection(beta, h):
    q = rs_stationary_point(beta, h)
    oracle = brentq(lambda v: _tanh_square_mean(v, beta, h, 200) - v, 1e-3, 1.0, xtol=1e-13)
    assert q > 0.0
    assert q == pytest.approx(oracle, abs=1e-8)


def test_rs_point_rejects_negative_beta():
    with pytest.raises(InvalidInput):
        rs_stationary_point(-1.0, 0.0)


def test_high_temperature_optimum_is_annealed():
    beta = 0.5
    result = optimize(1, beta, 0.0, restarts=2, max_iter=100)
    assert -1e-6 <= result.value - (LN2 + beta * beta / 4.0) <= 1e-4
    assert result.candidates["annealed"] == pytest.approx(LN2 + beta * beta / 4.0, abs=1e-8)


def test_value_nonincreasing_in_k():
    k1 = optimize(1, 2.0, 0.0, restarts=2, max_iter=100)
    assert k1.value <= k1.candidates["k=0"] + 1e-8
    assert k1.value <= k1.candidates["replica_symmetric"]
    assert k1.value <= k1.candidates["annealed"]


def test_best_value_bounds_every_iterate():
    result = optimize(1, 1.5, 0.1, restarts=2, max_iter=60, seed=3)
    assert result.trace
    assert all(entry.value >= result.value for entry in result.trace)
    assert result.params.k >= 1
    assert set(result.to_dict()) == {"k", "params", "value", "converged", "candidates", "trace"}


@pytest.mark.slow
def test_one_step_breaking_beats_replica_symmetry_at_low_temperature():
    rs = optimize(0, 2.0, 0.0, restarts=8)
    one_step = optimize(1, 2.0, 0.0, restarts=8)
    oracle, _ = grid_search(2.0, 0.0, resolution=200)
    assert rs.value - one_step.value > 1e-4
    assert one_step.value <= oracle + 1e-6


def test_grid_search_bounded_by_annealed_value_at_high_temperature():
    value, params = grid_search(0.5, 0.0, resolution=10)
    assert value >= LN2 + 0.0625 - 1e-6
    assert params.k == 1


def test_optimize_rejects_large_k():
    with pytest.raises(InvalidInput):
        optimize(4, 1.0, 0.0)


def test_optimize_rejects_zero_restarts():
    with pytest.raises(InvalidInput):
        optimize(1, 1.0, 0.0, restarts=0)


def test_optimize_is_thread_count_invariant():
    serial = optimize(1, 1.5, 0.1, restarts=3, max_iter=40, seed=2, threads=1)
    pooled = optimize(1, 1.5, 0.1, restarts=3, max_iter=40, seed=2, threads=3)
    assert pooled.to_dict() == serial.to_dict()


def test_optimized_parameters_bound_finite_size_pressure():
    result = optimize(1, 1.5, 0.3, restarts=2, max_iter=60, seed=0)
    gap = guerra_gap(8, result.params, 1.5, 0.3, n_disorder=100, seed=1)
    assert gap.functional == pytest.approx(result.value, abs=1e-12)
    assert gap.holds


# ---------------------------------------------------------------------------
# Finite-size upper bound over a (beta, h) grid
# ---------------------------------------------------------------------------


def _bound_candidates(beta, h):
    return [
        OrderParameter.annealed(),
        OrderParameter.replica_symmetric(rs_stationary_point(beta, h)),
        OrderParameter((0.5,), (0.4,)),
        OrderParameter((0.3, 0.7), (0.2, 0.6)),
    ]


@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("h", [0.0, 0.3])
def test_functional_bounds_pressure_on_grid(beta, h):
    for params in _bound_candidates(beta, h):
        gap = guerra_gap(8, params, beta, h, n_disorder=100, seed=4)
        assert gap.holds, (params, gap.to_dict())


@pytest.mark.slow
@pytest.mark.parametrize("beta", [0.5, 1.0, 1.5, 2.0])
@pytest.mark.parametrize("h", [0.0, 0.3])
def test_optimized_functional_bounds_twelve_spin_pressure(beta, h):
    result = optimize(2, beta, h, restarts=4, seed=0)
    gap = guerra_gap(12, result.params, beta, h, n_disorder=200, seed=5, threads=4)
    assert gap.holds, gap.to_dict()
