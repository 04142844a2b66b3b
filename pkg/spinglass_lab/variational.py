# spinglass_lab/variational.py

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, softmax

from .core import OrderParameter
from .exceptions import InvalidInput, NumericalFailure
from .parisi import SolverSettings, parisi_functional
from .utils import SeedSpec, gauss_hermite, parallel_map

logger = logging.getLogger(__name__)

MAX_STEPS = 3
SIMPLEX_TOLERANCE = 1e-6
FIXED_POINT_TOLERANCE = 1e-10
MIN_INCREMENT = 1e-6


def _tanh_square_mean(q: float, beta: float, h: float, order: int) -> float:
    nodes, weights = gauss_hermite(order)
    return float(np.tanh(beta * (math.sqrt(q) * nodes + h)) ** 2 @ weights)


def rs_stationary_point(
    beta: float,
    h: float,
    damping: float = 0.5,
    max_iter: int = 10_000,
    order: int = 200,
) -> float:
    """
    Largest solution of q = E tanh²(β(√q z + h)) by damped fixed-point
    iteration from q = 1. At h = 0 and β ≤ 1 the only solution is q = 0.
    """
    if not (math.isfinite(beta) and beta >= 0.0):
        raise InvalidInput(f"beta must be finite and >= 0, got {beta}")
    if not 0.0 < damping <= 1.0:
        raise InvalidInput(f"damping must lie in (0, 1], got {damping}")
    if h == 0.0 and beta <= 1.0:
        return 0.0
    q = 1.0
    for _ in range(max_iter):
        target = _tanh_square_mean(q, beta, h, order)
        if abs(target - q) < FIXED_POINT_TOLERANCE * 1e-2:
            return target
        q = (1.0 - damping) * q + damping * target
    residual = _tanh_square_mean(q, beta, h, order) - q
    if abs(residual) < FIXED_POINT_TOLERANCE:
        return q
    raise NumericalFailure(
        f"RS fixed point did not converge after {max_iter} iterations (beta={beta}, h={h}, residual {residual:.3g})"
    )


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------


def _increasing(theta: np.ndarray) -> np.ndarray:
    """k logits → 0 < v_1 < ... < v_k < 1 as partial sums of a (k+1)-softmax."""
    return np.cumsum(softmax(np.append(theta, 0.0)))[:-1]


def _logits(values: Sequence[float]) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    increments = np.diff(np.concatenate(([0.0], values, [1.0])))
    increments = np.maximum(increments, MIN_INCREMENT)
    return np.log(increments[:-1]) - math.log(increments[-1])


def decode(theta: Sequence[float], k: int) -> OrderParameter:
    theta = np.asarray(theta, dtype=float)
    if k == 0:
        q = float(expit(theta[0]))
        return OrderParameter.replica_symmetric(min(q, 1.0 - MIN_INCREMENT))
    x = _increasing(theta[:k])
    q = _increasing(theta[k:])
    return OrderParameter.from_levels(x, q)


def encode(params: OrderParameter, k: int) -> np.ndarray:
    """Logits for a k-level start point; missing levels are padded above the top one."""
    if k == 0:
        q = min(max(params.q[-1] if params.q else 0.0, MIN_INCREMENT), 1.0 - MIN_INCREMENT)
        return np.array([math.log(q / (1.0 - q))])
    x = [min(v, 1.0 - MIN_INCREMENT) for v in params.x][:k]
    q = [max(v, MIN_INCREMENT) for v in params.q][:k]
    while len(x) < k:
        top_x = x[-1] if x else 0.5
        top_q = q[-1] if q else 0.5
        x.append((top_x + 1.0) / 2.0)
        q.append((top_q + 1.0) / 2.0)
    return np.concatenate((_logits(x), _logits(q)))


# ---------------------------------------------------------------------------
# Optimization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TraceEntry:
    restart: int
    iteration: int
    value: float
    params: OrderParameter

    def to_dict(self) -> dict:
        return {"restart": self.restart, "iteration": self.iteration, "value": self.value, "params": self.params.to_dict()}


@dataclass(frozen=True)
class VariationalResult:
    k: int
    params: OrderParameter
    value: float
    trace: Tuple[TraceEntry, ...]
    candidates: Dict[str, float]
    converged: bool

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "params": self.params.to_dict(),
            "value": self.value,
            "converged": self.converged,
            "candidates": dict(self.candidates),
            "trace": [entry.to_dict() for entry in self.trace],
        }


def _run_restart(
    start: np.ndarray,
    k: int,
    restart: int,
    beta: float,
    h: float,
    settings: Optional[SolverSettings],
    max_iter: int,
) -> Tuple[List[TraceEntry], bool]:
    def objective(theta: np.ndarray) -> float:
        return parisi_functional(decode(theta, k), beta, h, settings)

    trace: List[TraceEntry] = []

    def record(xk: np.ndarray) -> None:
        params = decode(xk, k)
        trace.append(TraceEntry(restart, len(trace) + 1, objective(xk), params))

    record(start)
    result = minimize(
        objective,
        start,
        method="Nelder-Mead",
        callback=record,
        options={"xatol": SIMPLEX_TOLERANCE, "fatol": 1e-12, "maxiter": max_iter},
    )
    record(result.x)
    return trace, bool(result.success)


def optimize(
    k: int,
    beta: float,
    h: float,
    settings: Optional[SolverSettings] = None,
    restarts: int = 8,
    seed=0,
    threads: int = 1,
    max_iter: Optional[int] = None,
) -> VariationalResult:
    """
    Minimize P[x] over k-level order parameters (k = 0 is the replica
    symmetric family x = 1 on [q, 1)).

    Every run also scores the annealed order parameter, the replica
    symmetric stationary point and the best (k − 1)-level result, so the
    returned value never increases with k.
    """
    if k not in range(MAX_STEPS + 1):
        raise InvalidInput(f"k must be one of 0..{MAX_STEPS}, got {k}")
    if restarts < 1:
        raise InvalidInput(f"restarts must be >= 1, got {restarts}")
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    dim = max(1, 2 * k)
    budget = max_iter or 200 * dim

    candidates: Dict[str, Tuple[float, OrderParameter]] = {}
    annealed = OrderParameter.annealed()
    candidates["annealed"] = (parisi_functional(annealed, beta, h, settings), annealed)
    try:
        rs = OrderParameter.replica_symmetric(rs_stationary_point(beta, h))
        candidates["replica_symmetric"] = (parisi_functional(rs, beta, h, settings), rs)
    except NumericalFailure as e:
        logger.warning("skipping the RS candidate: %s", e.detail)

    lower: Optional[VariationalResult] = None
    if k > 0:
        lower = optimize(k - 1, beta, h, settings, restarts, seeds.child(k - 1), threads, max_iter)
        candidates[f"k={k - 1}"] = (lower.value, lower.params)

    best_start = lower.params if lower is not None else candidates.get("replica_symmetric", candidates["annealed"])[1]
    starts = [encode(best_start, k)]
    for r in range(1, restarts):
        starts.append(seeds.generator(k, r).normal(0.0, 1.5, size=dim))

    runs = parallel_map(
        lambda item: _run_restart(item[1], k, item[0], beta, h, settings, budget),
        list(enumerate(starts)),
        threads,
    )
    trace = tuple(entry for entries, _ in runs for entry in entries)
    converged = any(ok for _, ok in runs)
    if not converged:
        logger.warning("Nelder-Mead did not converge in any of %d restarts at k=%d; returning best so far", restarts, k)

    best_value, best_params = min(
        [(entry.value, entry.params) for entry in trace] + list(candidates.values()),
        key=lambda pair: pair[0],
    )
    return VariationalResult(
        k=k,
        params=best_params,
        value=best_value,
        trace=trace,
        candidates={name: value for name, (value, _) in candidates.items()},
        converged=converged,
    )


def grid_search(
    beta: float,
    h: float,
    resolution: int = 200,
    settings: Optional[SolverSettings] = None,
) -> Tuple[float, OrderParameter]:
    """Minimum of P[x] over a resolution × resolution grid of one-level (x_1, q_1)."""
    levels = (np.arange(resolution) + 0.5) / resolution
    best: Tuple[float, OrderParameter] = (math.inf, OrderParameter.annealed())
    for x1 in levels:
        for q1 in levels:
            params = OrderParameter((float(x1),), (float(q1),))
            value = parisi_functional(params, beta, h, settings)
            if value < best[0]:
                best = (value, params)
    return best
