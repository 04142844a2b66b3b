# spinglass_lab/parisi.py

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, List, Optional, Sequence, Tuple, Union
import logging
import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import logsumexp

from .core import CovarianceSeries, OrderParameter
from .exceptions import InvalidInput, NumericalFailure
from .laws import LnCosh, PsiFunction
from .utils import LN2, check_finite, gauss_hermite, log_cosh

logger = logging.getLogger(__name__)

MIN_QUAD_ORDER = 20
MAX_GRID_STEP = 0.05
REFINEMENT_TOLERANCE = 1e-4


@dataclass(frozen=True)
class SolverSettings:
    """
    Numerical settings for the recursion.

    Args:
        quad_order: Gauss–Hermite node count (at least 20).
        grid_step: y-grid spacing (at most 0.05).
        span: half-width of the y-grid; None means 8 + β·k.
    """

    quad_order: int = 40
    grid_step: float = 0.025
    span: Optional[float] = None

    def __post_init__(self):
        if self.quad_order < MIN_QUAD_ORDER:
            raise InvalidInput(f"quad_order must be >= {MIN_QUAD_ORDER}, got {self.quad_order}")
        if not 0.0 < self.grid_step <= MAX_GRID_STEP:
            raise InvalidInput(f"grid_step must lie in (0, {MAX_GRID_STEP}], got {self.grid_step}")
        if self.span is not None and not self.span > 0.0:
            raise InvalidInput(f"span must be positive, got {self.span}")

    def required_span(self, beta: float, k: int) -> float:
        return 8.0 + abs(beta) * k

    def grid(self, beta: float, k: int) -> np.ndarray:
        required = self.required_span(beta, k)
        span = required if self.span is None else self.span
        if span < required:
            raise InvalidInput(f"grid underspan: span {span} is below 8 + beta*k = {required}")
        n = int(math.ceil(span / self.grid_step))
        return self.grid_step * np.arange(-n, n + 1, dtype=float)


class _Tabulated:
    """
    Cubic spline on the grid. Outside it, an ln cosh boundary continues as
    β|y + h| plus the constant matched at the grid end (ln cosh u → |u| − ln 2
    carried down the recursion); other boundaries continue with the end slopes.
    """

    def __init__(self, grid: np.ndarray, values: np.ndarray, asymptote: Optional[Tuple[float, float]] = None):
        self.grid = grid
        self.values = values
        self.asymptote = asymptote
        self.spline = CubicSpline(grid, values)
        self.slope_lo = float(self.spline(grid[0], 1))
        self.slope_hi = float(self.spline(grid[-1], 1))

    def __call__(self, y):
        y = np.asarray(y, dtype=float)
        lo, hi = self.grid[0], self.grid[-1]
        out = self.spline(np.clip(y, lo, hi))
        if self.asymptote is not None:
            beta, h = self.asymptote
            below = self.values[0] + beta * (np.abs(y + h) - abs(lo + h))
            above = self.values[-1] + beta * (np.abs(y + h) - abs(hi + h))
        else:
            below = self.values[0] + self.slope_lo * (y - lo)
            above = self.values[-1] + self.slope_hi * (y - hi)
        out = np.where(y < lo, below, out)
        return np.where(y > hi, above, out)


def _cole_hopf(upper: Callable, y: np.ndarray, x: float, variance: float, order: int) -> np.ndarray:
    """(1/x) ln E_z exp(x·F(y + √variance z)); the plain expectation when x = 0."""
    if variance <= 0.0:
        return np.asarray(upper(y), dtype=float)
    nodes, weights = gauss_hermite(order)
    shifted = y[:, None] + math.sqrt(variance) * nodes[None, :]
    values = np.asarray(upper(shifted.ravel()), dtype=float).reshape(shifted.shape)
    if x == 0.0:
        return values @ weights
    return logsumexp(x * values, b=weights, axis=1) / x


@dataclass(frozen=True, eq=False)
class ParisiSolution:
    """
    f(q, ·) tabulated at every boundary point, ascending in q.

    `tables[i]` holds f(points[i], grid); the last entry is the boundary
    function itself.
    """

    params: OrderParameter
    beta: float
    h: float
    settings: SolverSettings
    covariance: CovarianceSeries
    boundary: PsiFunction
    points: Tuple[float, ...]
    grid: np.ndarray = field(repr=False)
    tables: Tuple[np.ndarray, ...] = field(repr=False)
    value: float = 0.0
    _levels: Tuple[Callable, ...] = field(default=(), repr=False, compare=False)

    @property
    def quadrature_order(self) -> int:
        return self.settings.quad_order

    def _v(self, q: float) -> float:
        # The bottom of the tree starts from zero variance.
        return 0.0 if q == 0.0 else float(self.covariance.variance_profile(q))

    def level(self, q: float) -> Callable:
        for point, fn in zip(self.points, self._levels):
            if point == q:
                return fn
        raise InvalidInput(f"q = {q} is not a tabulated level; tabulated: {list(self.points)}")

    def evaluate(self, t: float, y) -> np.ndarray:
        """f(t, y); an interior t gets a partial step from the level above it."""
        if not 0.0 <= t <= 1.0:
            raise InvalidInput(f"t must lie in [0, 1], got {t}")
        y = np.asarray(y, dtype=float)
        if y.size and np.max(np.abs(y)) > self.grid[-1]:
            logger.warning(
                "f(%s, y) requested at |y| = %.3g beyond the grid span %.3g; using the asymptotic continuation",
                t, float(np.max(np.abs(y))), float(self.grid[-1]),
            )
        if t in self.points:
            return np.asarray(self.level(t)(y), dtype=float)
        i = int(np.searchsorted(self.points, t))
        upper = self.points[i]
        x = self.params.evaluate(t)
        flat = y.reshape(-1)
        out = _cole_hopf(self._levels[i], flat, x, self._v(upper) - self._v(t), self.settings.quad_order)
        return out.reshape(y.shape)

    def lipschitz_profile(self) -> List[float]:
        """Largest grid slope of every tabulated level, from q = 1 downwards."""
        slopes = [float(np.max(np.abs(np.diff(t) / np.diff(self.grid)))) for t in self.tables]
        return slopes[::-1]

    def is_even(self, tol: float = 1e-10) -> bool:
        return all(float(np.max(np.abs(t - t[::-1]))) <= tol for t in self.tables)

    def to_rows(self) -> List[Tuple[float, float, float]]:
        """(q_j, y, f) triples for CSV export."""
        rows = []
        for point, table in zip(self.points, self.tables):
            rows.extend((point, float(y), float(v)) for y, v in zip(self.grid, table))
        return rows


@lru_cache(maxsize=256)
def _solve(
    params: OrderParameter,
    beta: float,
    h: float,
    settings: SolverSettings,
    covariance: CovarianceSeries,
    boundary: PsiFunction,
    breakpoints: Tuple[float, ...],
) -> ParisiSolution:
    grid = settings.grid(beta, params.k)
    points = sorted(set(params.boundaries()) | {float(b) for b in breakpoints if 0.0 < b < 1.0})

    def v(q: float) -> float:
        return 0.0 if q == 0.0 else float(covariance.variance_profile(q))

    asymptote = (abs(boundary.beta), boundary.h) if isinstance(boundary, LnCosh) else None
    levels: List[Callable] = [boundary]
    tables: List[np.ndarray] = [np.asarray(boundary(grid), dtype=float)]
    for lower, upper in zip(points[-2::-1], points[:0:-1]):
        x = params.evaluate(lower)
        values = _cole_hopf(levels[-1], grid, x, v(upper) - v(lower), settings.quad_order)
        check_finite(values, f"f({lower}, y)")
        tables.append(values)
        levels.append(_Tabulated(grid, values, asymptote))

    center = len(grid) // 2
    value = float(tables[-1][center])
    return ParisiSolution(
        params=params,
        beta=beta,
        h=h,
        settings=settings,
        covariance=covariance,
        boundary=boundary,
        points=tuple(points),
        grid=grid,
        tables=tuple(tables[::-1]),
        value=value,
        _levels=tuple(levels[::-1]),
    )


def solve_recursive(
    params: OrderParameter,
    beta: float,
    h: float,
    settings: Optional[SolverSettings] = None,
    covariance: Optional[CovarianceSeries] = None,
    boundary: Optional[PsiFunction] = None,
    breakpoints: Sequence[float] = (),
) -> ParisiSolution:
    """
    Solve the piecewise Cole–Hopf recursion for f(q, y).

    Starting from f(1, y) = ln cosh(β(y + h)) (or `boundary`), each interval
    [a, b) with constant x = x(a) > 0 applies
        f(a, y) = (1/x) ln E_z exp(x f(b, y + √(v(b) − v(a)) z)),
    and intervals with x = 0 take the plain expectation. v(q) = f'(q)/2 of
    the covariance (v(q) = q for SK). Results are cached per argument set.

    Args:
        params: the order parameter x(q).
        beta: inverse temperature.
        h: external field.
        settings: quadrature and grid settings.
        covariance: mixture f(q); defaults to SK.
        boundary: terminal condition at q = 1; defaults to ln cosh(β(y + h)).
        breakpoints: extra tabulation points with no change in x.

    Returns:
        ParisiSolution: the tabulated levels and f(0, 0).
    """
    if not isinstance(params, OrderParameter):
        raise InvalidInput("params must be an OrderParameter")
    if not (math.isfinite(beta) and beta >= 0.0):
        raise InvalidInput(f"beta must be finite and >= 0, got {beta}")
    if not math.isfinite(h):
        raise InvalidInput(f"h must be finite, got {h}")
    settings = settings or SolverSettings()
    covariance = covariance or CovarianceSeries.sk()
    boundary = boundary or LnCosh(beta, h)
    breakpoints = tuple(sorted(float(b) for b in breakpoints))
    if any(not 0.0 <= b <= 1.0 for b in breakpoints):
        raise InvalidInput(f"breakpoints must lie in [0, 1], got {list(breakpoints)}")
    try:
        return _solve(params, float(beta), float(h), settings, covariance, boundary, breakpoints)
    except (InvalidInput, NumericalFailure):
        raise
    except (ValueError, FloatingPointError) as e:
        raise NumericalFailure(f"Parisi recursion failed: {e}")


def parisi_functional(
    params: OrderParameter,
    beta: float,
    h: float,
    settings: Optional[SolverSettings] = None,
    covariance: Optional[CovarianceSeries] = None,
) -> float:
    """P[x] = ln 2 + f(0, 0; x) − (β²/2) Σ x_i (φ(q_{i+1}) − φ(q_i))/2."""
    covariance = covariance or CovarianceSeries.sk()
    solution = solve_recursive(params, beta, h, settings, covariance)
    return LN2 + solution.value - 0.5 * beta * beta * params.phi_integral(covariance)


def rs_functional(q: float, beta: float, h: float, order: int = 200) -> float:
    """ln 2 + E ln cosh(β(√q z + h)) + β²(1 − q)²/4 by direct quadrature."""
    if not 0.0 <= q <= 1.0:
        raise InvalidInput(f"q must lie in [0, 1], got {q}")
    nodes, weights = gauss_hermite(order)
    inner = float(log_cosh(beta * (math.sqrt(q) * nodes + h)) @ weights)
    return LN2 + inner + beta * beta * (1.0 - q) ** 2 / 4.0


def martingale_weight(
    params: OrderParameter,
    beta: float,
    h: float,
    t: float,
    y,
    settings: Optional[SolverSettings] = None,
) -> np.ndarray:
    """f(t, y) from the tabulated solution."""
    return solve_recursive(params, beta, h, settings).evaluate(t, y)


# ---------------------------------------------------------------------------
# Continuous x(q)
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RefinementReport:
    steps: Tuple[int, ...]
    values: Tuple[float, ...]
    params: Tuple[OrderParameter, ...]

    @property
    def differences(self) -> Tuple[float, ...]:
        return tuple(b - a for a, b in zip(self.values, self.values[1:]))

    @property
    def converged(self) -> bool:
        return bool(self.differences) and abs(self.differences[-1]) < REFINEMENT_TOLERANCE

    def to_dict(self) -> dict:
        return {
            "steps": list(self.steps),
            "values": list(self.values),
            "differences": list(self.differences),
            "converged": self.converged,
            "params": [p.to_dict() for p in self.params],
        }


def _discretize(x_continuous: Union[Callable, Tuple[Sequence[float], Sequence[float]]], steps: int) -> OrderParameter:
    left = np.arange(steps) / steps
    if callable(x_continuous):
        values = np.array([float(x_continuous(q)) for q in left])
    else:
        grid, table = (np.asarray(a, dtype=float) for a in x_continuous)
        values = np.interp(left, grid, table)
    if np.any(values > 1.0):
        logger.warning("refinement levels above 1 clipped to 1 (max %.6g)", float(values.max()))
        values = np.minimum(values, 1.0)
    return OrderParameter.from_levels(np.maximum(values, 0.0), left)


def refine_continuous(
    x_continuous: Union[Callable, Tuple[Sequence[float], Sequence[float]]],
    beta: float,
    h: float,
    levels: Sequence[int] = (2, 4, 8, 16),
    settings: Optional[SolverSettings] = None,
) -> RefinementReport:
    """
    P[x_k] for right-continuous step approximants with k equal steps, each
    level taking the value of x at its left endpoint.

    `x_continuous` is a callable on [0, 1] or a (grid, values) pair.
    """
    if callable(x_continuous):
        probe = np.linspace(0.0, 1.0, 1001)
        sampled = np.array([float(x_continuous(q)) for q in probe])
    else:
        grid, sampled = (np.asarray(a, dtype=float) for a in x_continuous)
        if grid.shape != sampled.shape or grid.size < 2 or np.any(np.diff(grid) <= 0.0):
            raise InvalidInput("x grid must be strictly increasing and match the value table")
    if np.any(np.diff(sampled) < 0.0):
        raise InvalidInput("x(q) must be nondecreasing")
    if np.any(sampled < 0.0):
        raise InvalidInput("x(q) must be nonnegative")

    params = tuple(_discretize(x_continuous, int(k)) for k in levels)
    values = tuple(parisi_functional(p, beta, h, settings) for p in params)
    return RefinementReport(tuple(int(k) for k in levels), values, params)
