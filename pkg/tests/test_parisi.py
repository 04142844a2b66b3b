"""Tests for spinglass_lab/parisi.py — the Cole–Hopf recursion, P[x] and refinement."""

import math

import numpy as np
import pytest

from spinglass_lab.core import OrderParameter
from spinglass_lab.exceptions import InvalidInput
from spinglass_lab.parisi import (
    SolverSettings,
    martingale_weight,
    parisi_functional,
    refine_continuous,
    rs_functional,
    solve_recursive,
)
from spinglass_lab.utils import LN2, log_cosh
from spinglass_lab.variational import rs_stationary_point

TWO_LEVEL = OrderParameter((0.3, 0.7), (0.2, 0.6))
FINE = SolverSettings(quad_order=200, grid_step=0.01)


# ---------------------------------------------------------------------------
# Settings
# ---------------------------------------------------------------------------


def test_settings_reject_low_quadrature_order():
    with pytest.raises(InvalidInput):
        SolverSettings(quad_order=10)


def test_settings_reject_coarse_grid():
    with pytest.raises(InvalidInput):
        SolverSettings(grid_step=0.1)


def test_grid_underspan():
    with pytest.raises(InvalidInput) as exc_info:
        solve_recursive(TWO_LEVEL, 2.0, 0.0, SolverSettings(span=5.0))
    assert "grid underspan" in exc_info.value.detail


# ---------------------------------------------------------------------------
# Closed forms
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_annealed_recursion_value(beta):
    solution = solve_recursive(OrderParameter.annealed(), beta, 0.0)
    assert solution.value == pytest.approx(beta * beta / 2.0, abs=1e-8)


@pytest.mark.parametrize("beta", [0.5, 1.0, 2.0])
def test_annealed_functional(beta):
    assert parisi_functional(OrderParameter.annealed(), beta, 0.0) == pytest.approx(LN2 + beta * beta / 4.0, abs=1e-8)


def test_zero_beta_is_ln2():
    assert solve_recursive(TWO_LEVEL, 0.0, 0.0).value == 0.0
    assert parisi_functional(TWO_LEVEL, 0.0, 0.3) == pytest.approx(LN2)


def test_rs_limit_of_one_level_solution():
    q, beta, h = 0.3, 1.0, 0.2
    near_rs = OrderParameter((1.0 - 1e-8,), (q,))
    assert parisi_functional(near_rs, beta, h, FINE) == pytest.approx(rs_functional(q, beta, h), abs=1e-6)


def test_rs_stationary_point_value_at_low_temperature():
    beta = 2.0
    q = rs_stationary_point(beta, 0.0)
    value = parisi_functional(OrderParameter.replica_symmetric(q), beta, 0.0, FINE)
    assert 0.0 < q < 1.0
    assert value == pytest.approx(rs_functional(q, beta, 0.0), abs=1e-6)


def test_rs_functional_is_finite_at_large_beta():
    beta, q = 1000.0, 0.5
    # E ln cosh(a z) = a E|z| − ln 2 up to a term of order 1/a.
    expected = beta * math.sqrt(q) * math.sqrt(2.0 / math.pi) + beta * beta * (1.0 - q) ** 2 / 4.0
    value = rs_functional(q, beta, 0.0)
    assert math.isfinite(value)
    assert value == pytest.approx(expected, rel=1e-4)


def test_rs_functional_rejects_bad_overlap():
    with pytest.raises(InvalidInput):
        rs_functional(1.5, 1.0, 0.0)


# ---------------------------------------------------------------------------
# Solution structure
# ---------------------------------------------------------------------------


def test_boundary_level_is_lncosh():
    beta, h = 1.3, 0.4
    solution = solve_recursive(TWO_LEVEL, beta, h)
    y = np.array([-3.0, -0.7, 0.0, 1.1, 2.5])
    assert np.allclose(solution.evaluate(1.0, y), np.log(np.cosh(beta * (y + h))), atol=1e-14)
    assert np.allclose(solution.tables[-1], np.log(np.cosh(beta * (solution.grid + h))), atol=1e-14)


def test_evaluate_at_origin_is_value():
    solution = solve_recursive(TWO_LEVEL, 1.0, 0.0)
    assert float(solution.evaluate(0.0, 0.0)) == pytest.approx(solution.value, abs=1e-12)


def test_points_include_every_boundary():
    solution = solve_recursive(TWO_LEVEL, 1.0, 0.0)
    assert solution.points == (0.0, 0.2, 0.6, 1.0)
    assert len(solution.tables) == 4


def test_levels_are_even_at_zero_field():
    assert solve_recursive(TWO_LEVEL, 1.5, 0.0).is_even()


def test_levels_are_convex_and_lipschitz():
    beta = 1.5
    solution = solve_recursive(TWO_LEVEL, beta, 0.3)
    for table in solution.tables:
        assert np.all(np.diff(table, 2) >= -1e-10)
    assert all(slope <= beta + 1e-9 for slope in solution.lipschitz_profile())


def test_redundant_boundary_leaves_value_unchanged():
    settings = SolverSettings(grid_step=0.01)
    plain = solve_recursive(TWO_LEVEL, 1.0, 0.0, settings)
    augmented = solve_recursive(TWO_LEVEL, 1.0, 0.0, settings, breakpoints=(0.4,))
    assert 0.4 in augmented.points
    assert augmented.value == pytest.approx(plain.value, abs=1e-8)


def test_interior_time_matches_inserted_boundary():
    t = 0.4
    y = np.array([-1.0, 0.0, 0.5])
    solution = solve_recursive(TWO_LEVEL, 1.0, 0.2)
    augmented = solve_recursive(TWO_LEVEL, 1.0, 0.2, breakpoints=(t,))
    assert np.allclose(solution.evaluate(t, y), augmented.level(t)(y), atol=1e-6)


def test_martingale_weight_at_the_boundary():
    y = np.linspace(-2.0, 2.0, 9)
    assert np.allclose(martingale_weight(TWO_LEVEL, 1.0, 0.0, 1.0, y), np.log(np.cosh(y)))


def test_evaluate_rejects_time_outside_unit_interval():
    with pytest.raises(InvalidInput):
        solve_recursive(TWO_LEVEL, 1.0, 0.0).evaluate(1.2, 0.0)


def test_untabulated_level():
    with pytest.raises(InvalidInput) as exc_info:
        solve_recursive(TWO_LEVEL, 1.0, 0.0).level(0.5)
    assert "not a tabulated level" in exc_info.value.detail


def test_extrapolation_is_flagged(caplog):
    solution = solve_recursive(TWO_LEVEL, 1.0, 0.0)
    with caplog.at_level("WARNING"):
        solution.evaluate(0.2, np.array([50.0]))
    assert "beyond the grid span" in caplog.text


def test_continuation_beyond_grid_follows_lncosh_asymptote():
    beta, h = 1.0, 0.3
    solution = solve_recursive(OrderParameter.annealed(), beta, h)
    y = np.array([1000.0, -1000.0])
    # x = 1 on [0, 1): f(0, y) = ln cosh(β(y + h)) + β²/2 exactly.
    expected = log_cosh(beta * (y + h)) + beta * beta / 2.0
    assert np.allclose(solution.evaluate(0.0, y), expected, atol=1e-6)


def test_csv_rows_cover_every_level():
    solution = solve_recursive(TWO_LEVEL, 1.0, 0.0)
    rows = solution.to_rows()
    assert len(rows) == len(solution.points) * solution.grid.size
    assert {row[0] for row in rows} == set(solution.points)


def test_doubling_quadrature_order_is_stable():
    coarse = solve_recursive(TWO_LEVEL, 1.0, 0.0, SolverSettings(quad_order=40, grid_step=0.01))
    fine = solve_recursive(TWO_LEVEL, 1.0, 0.0, SolverSettings(quad_order=80, grid_step=0.01))
    assert fine.value == pytest.approx(coarse.value, abs=1e-8)


def test_functional_nondecreasing_in_beta():
    values = [parisi_functional(TWO_LEVEL, beta, 0.0) for beta in (0.25, 0.5, 1.0, 1.5, 2.0)]
    assert all(b >= a - 1e-12 for a, b in zip(values, values[1:]))


# ---------------------------------------------------------------------------
# Refinement of continuous x(q)
# ---------------------------------------------------------------------------


def test_constant_x_refinements_are_identical():
    report = refine_continuous(lambda q: 0.5, 1.0, 0.0)
    assert len(set(report.values)) == 1
    assert report.converged


def test_step_function_reproduced_at_every_level():
    report = refine_continuous(lambda q: 0.3 if q < 0.5 else 0.7, 1.0, 0.0)
    two_level = parisi_functional(OrderParameter((0.3, 0.7), (0.0, 0.5)), 1.0, 0.0)
    assert all(value == pytest.approx(two_level, abs=1e-12) for value in report.values)


def test_linear_x_differences_shrink():
    report = refine_continuous(lambda q: q, 1.0, 0.0)
    gaps = [abs(d) for d in report.differences]
    assert len(gaps) == 3
    assert all(b < a for a, b in zip(gaps, gaps[1:]))


def test_tabulated_x_input():
    grid = np.linspace(0.0, 1.0, 11)
    report = refine_continuous((grid, 0.5 * grid), 1.0, 0.0, levels=(2, 4))
    assert report.to_dict()["steps"] == [2, 4]


def test_non_monotone_x_rejected():
    with pytest.raises(InvalidInput) as exc_info:
        refine_continuous(lambda q: math.sin(6.0 * q) ** 2, 1.0, 0.0)
    assert "nondecreasing" in exc_info.value.detail
