"""Tests for spinglass_lab/rost.py — random overlap structures, cavity fields and the G functional."""

import math

import numpy as np
import pytest

from spinglass_lab.cascade import build_cascade
from spinglass_lab.core import CovarianceSeries, OrderParameter
from spinglass_lab.exceptions import InvalidInput
from spinglass_lab.parisi import parisi_functional, solve_recursive
from spinglass_lab.rost import (
    CascadeSource,
    FixedSource,
    RostSample,
    SKGibbsSource,
    cavity_fields,
    g_functional_estimate,
    guerra_gap,
    integrability_bounds_check,
    rost_from_cascade,
    rost_from_sk_gibbs,
    rost_from_weights,
    saturation_probe,
    saturation_trend,
    validate_rost,
)
from spinglass_lab.sk_model import Variant, sample_disorder
from spinglass_lab.utils import LN2, SeedSpec, difference, gauss_hermite, log_cosh

ONE_LEVEL = OrderParameter((0.5,), (0.4,))
# Small x keeps the top-m truncation bias of the cascade negligible.
TWO_LEVEL = OrderParameter((0.2, 0.4), (0.3, 0.7))
SINGLE_STATE = rost_from_weights([1.0], [[1.0]])


# ---------------------------------------------------------------------------
# Construction and validation
# ---------------------------------------------------------------------------


def test_custom_rost_is_sorted_by_weight():
    rost = rost_from_weights([0.2, 0.5, 0.3], np.eye(3))
    assert rost.weights.tolist() == [0.5, 0.3, 0.2]
    assert rost.source == "custom"


def test_ascending_weights_rejected():
    with pytest.raises(InvalidInput) as exc_info:
        validate_rost(RostSample(np.array([0.2, 0.8]), overlaps=np.eye(2)))
    assert "descending" in exc_info.value.detail


def test_overlap_diagonal_must_be_one():
    with pytest.raises(InvalidInput) as exc_info:
        rost_from_weights([0.6, 0.4], [[1.0, 0.2], [0.2, 0.9]])
    assert "unit diagonal" in exc_info.value.detail


def test_non_psd_overlaps_rejected():
    q = [[1.0, 0.9, 0.9], [0.9, 1.0, -0.9], [0.9, -0.9, 1.0]]
    with pytest.raises(InvalidInput):
        rost_from_weights([0.5, 0.3, 0.2], q)


def test_overlap_source_must_be_unique():
    with pytest.raises(InvalidInput) as exc_info:
        validate_rost(RostSample(np.array([1.0]), overlaps=np.eye(1), embedding=np.ones((1, 1))))
    assert "exactly one" in exc_info.value.detail


def test_cascade_rost_keeps_every_leaf():
    cascade = build_cascade(OrderParameter((0.3, 0.7), (0.2, 0.6)), 5, 0)
    rost = rost_from_cascade(cascade)
    assert rost.n_states == 25
    assert np.all(np.diff(rost.weights) <= 0.0)
    assert np.allclose(np.diag(rost.overlap_matrix()), 1.0)


def test_gibbs_rost_at_zero_beta_is_uniform():
    rost = rost_from_sk_gibbs(sample_disorder(3, 0.0, 0.0, Variant.CLASSIC, 0))
    assert rost.n_states == 8
    assert np.all(rost.weights == 1.0)


def test_two_spin_gibbs_overlaps_are_psd():
    rost = rost_from_sk_gibbs(sample_disorder(2, 1.0, 0.0, Variant.CLASSIC, 1))
    q = rost.overlap_matrix()
    assert q.shape == (4, 4)
    assert set(np.unique(np.round(q, 12))) == {-1.0, 0.0, 1.0}
    assert np.linalg.eigvalsh(q).min() >= -1e-12


# ---------------------------------------------------------------------------
# Cavity fields
# ---------------------------------------------------------------------------


def test_single_state_field_variances():
    rng = SeedSpec(0).generator()
    eta = cavity_fields(SINGLE_STATE, 20_000, None, rng).eta[:, 0]
    kappa = np.array([cavity_fields(SINGLE_STATE, 1, None, rng).kappa[0] for _ in range(4000)])
    assert np.var(eta) == pytest.approx(1.0, abs=0.05)
    assert np.var(kappa) == pytest.approx(0.5, abs=0.05)


def test_dense_route_for_custom_rost():
    fields = cavity_fields(rost_from_weights([0.7, 0.3], [[1.0, 0.5], [0.5, 1.0]]), 3, None, 0)
    assert fields.route == "dense"
    assert fields.eta.shape == (3, 2)


def test_tree_route_for_cascade_rost():
    fields = cavity_fields(rost_from_cascade(build_cascade(ONE_LEVEL, 20, 0)), 2, None, 1)
    assert fields.route == "tree"
    assert fields.tail_mass == 0.0


def test_embedding_field_covariance_follows_overlaps():
    rost = rost_from_sk_gibbs(sample_disorder(2, 0.0, 0.0, Variant.CLASSIC, 0))
    fields = cavity_fields(rost, 20_000, None, 2)
    assert fields.route == "embedding"
    assert np.allclose(np.cov(fields.eta, rowvar=False), rost.overlap_matrix(), atol=0.05)


def test_p_spin_kappa_covariance():
    assert float(CovarianceSeries.p_spin(4).kappa_profile(0.5)) == pytest.approx(0.09375)


def test_cavity_needs_an_added_spin():
    with pytest.raises(InvalidInput):
        cavity_fields(SINGLE_STATE, 0, None, 0)


# ---------------------------------------------------------------------------
# The G functional
# ---------------------------------------------------------------------------


def test_single_state_g_functional():
    beta = 1.0
    result = g_functional_estimate(FixedSource(SINGLE_STATE), 1, beta, 0.0, n_outer=4000, seed=0)
    nodes, weights = gauss_hermite(100)
    expected_g1 = LN2 + float(log_cosh(beta * nodes) @ weights)
    assert result.G1.within(expected_g1, sigmas=4.0)
    assert result.G2.within(0.0, sigmas=4.0)
    assert result.source == "custom"


def test_one_level_cascade_matches_parisi_terms():
    beta = 1.0
    result = g_functional_estimate(CascadeSource(ONE_LEVEL, m=200), 1, beta, 0.0, n_outer=2000, seed=0)
    g1 = LN2 + solve_recursive(ONE_LEVEL, beta, 0.0).value
    g2 = beta * beta / 2.0 * ONE_LEVEL.q_integral()
    assert g2 == pytest.approx(0.105)
    assert result.G1.within(g1, sigmas=3.0, slack=0.005)
    assert result.G2.within(g2, sigmas=3.0, slack=0.005)


@pytest.mark.slow
def test_two_level_cascade_g_functional_does_not_depend_on_cavity_size():
    beta = 1.5
    source = CascadeSource(TWO_LEVEL, m=200)
    small = g_functional_estimate(source, 2, beta, 0.0, n_outer=2000, seed=0)
    large = g_functional_estimate(source, 8, beta, 0.0, n_outer=2000, seed=1)
    functional = parisi_functional(TWO_LEVEL, beta, 0.0)
    g2 = beta * beta / 2.0 * TWO_LEVEL.q_integral()
    assert difference(small.G, large.G).within(0.0, sigmas=3.0, slack=0.005)
    for result in (small, large):
        assert result.G.within(functional, sigmas=3.0, slack=0.01)
        assert result.G2.within(g2, sigmas=3.0, slack=0.01)
        assert result.G1.value >= LN2 - 3.0 * result.G1.stderr


def test_g_functional_report_keys():
    result = g_functional_estimate(FixedSource(SINGLE_STATE), 2, 1.0, 0.1, n_outer=10, seed=3)
    data = result.to_dict()
    assert data["M"] == 2
    assert data["seed"] == 3
    assert {"G", "G1", "G2", "stderr"} <= set(data)


def test_g_functional_needs_samples():
    with pytest.raises(InvalidInput):
        g_functional_estimate(FixedSource(SINGLE_STATE), 1, 1.0, 0.0, n_outer=0)


def test_integrability_bounds_hold():
    report = integrability_bounds_check(CascadeSource(ONE_LEVEL, m=100), 2, 1.0, 0.2, n_outer=200, seed=0)
    assert report.kappa_bound == pytest.approx(0.5 + 2.0 * math.sqrt(2.0) * math.sqrt(0.5))
    assert report.holds


def test_gibbs_source_description():
    assert SKGibbsSource(4, 1.0).describe() == {"N": 4, "variant": "diagonal"}


# ---------------------------------------------------------------------------
# Finite-N comparisons
# ---------------------------------------------------------------------------


def test_guerra_gap_vanishes_at_zero_beta():
    gap = guerra_gap(6, ONE_LEVEL, 0.0, 0.0, n_disorder=5)
    assert gap.gap.value == 0.0
    assert gap.holds


def test_guerra_gap_nonnegative_for_annealed_bound():
    gap = guerra_gap(8, OrderParameter.annealed(), 0.5, 0.0, n_disorder=300, seed=0)
    assert gap.functional == pytest.approx(LN2 + 0.0625, abs=1e-8)
    assert gap.holds


def test_saturation_requires_small_cavity():
    with pytest.raises(InvalidInput) as exc_info:
        saturation_probe(8, 3, 1.0, 0.0, n_disorder=1)
    assert "M <= N/4" in exc_info.value.detail


def test_saturation_respects_enumeration_guard():
    with pytest.raises(InvalidInput):
        saturation_probe(24, 2, 1.0, 0.0, n_disorder=1)


def test_saturation_at_zero_beta_is_exact():
    report = saturation_probe(8, 2, 0.0, 0.0, n_disorder=10)
    assert report.difference.value == 0.0
    assert report.g_functional.G.value == LN2


def test_saturation_difference_within_envelope():
    report = saturation_probe(8, 2, 0.5, 0.0, n_disorder=200, seed=0)
    assert abs(report.difference.value) <= report.envelope + 4.0 * report.difference.stderr


def test_saturation_trend_at_zero_beta():
    trend = saturation_trend((8, 16), 2, 0.0, 0.0, n_disorder=5)
    assert trend.gaps == (0.0, 0.0)
    assert trend.shrinks
    assert trend.to_dict()["N"] == [8, 16]


def test_saturation_trend_needs_two_increasing_sizes():
    with pytest.raises(InvalidInput) as exc_info:
        saturation_trend((16, 8), 2, 1.0, 0.0, n_disorder=1)
    assert "two increasing sizes" in exc_info.value.detail
    with pytest.raises(InvalidInput):
        saturation_trend((8,), 2, 1.0, 0.0, n_disorder=1)


@pytest.mark.slow
def test_saturation_gap_shrinks_with_n():
    trend = saturation_trend((8, 16), 2, 1.0, 0.0, n_disorder=200, seed=0)
    assert len(trend.reports) == 2
    assert trend.shrinks
