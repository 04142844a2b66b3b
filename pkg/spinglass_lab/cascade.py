# spinglass_lab/cascade.py

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np
from scipy import stats

from .core import OrderParameter
from .exceptions import InvalidInput
from .laws import PsiFunction
from .rem import KSReport, per_rank_ks, rem_partition_moment, sample_rem_top, KS_THRESHOLD
from .utils import Estimate, SeedSpec, as_generator, parallel_map

logger = logging.getLogger(__name__)

MAX_LEAVES = 1_000_000
DENSE_LEAVES = 4000


@dataclass(frozen=True)
class Cascade:
    """
    Truncated hierarchical cascade.

    factors[j] has shape (m**j, m): row a holds the descending top-m atoms of
    the REM_{x_{j+1}} sample attached to depth-j node a. Leaf α (0 ≤ α < m**k)
    has base-m digits (a_1, ..., a_k), most significant first, and weight
    equal to the product of its path factors.
    """

    params: OrderParameter
    m: int
    factors: Tuple[np.ndarray, ...]
    weights: np.ndarray = field(init=False, repr=False)
    z: float = field(init=False)
    p: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        _check_params(self.params, self.m)
        if len(self.factors) != self.params.k:
            raise InvalidInput(f"expected {self.params.k} factor levels, got {len(self.factors)}")
        weights = np.asarray(self.factors[0], dtype=float).reshape(-1)
        for j, level in enumerate(self.factors[1:], start=1):
            level = np.asarray(level, dtype=float)
            if level.shape != (self.m**j, self.m):
                raise InvalidInput(f"level {j + 1} factors must have shape {(self.m**j, self.m)}, got {level.shape}")
            weights = (weights[:, None] * level).reshape(-1)
        for level in self.factors:
            if not np.all(level > 0.0) or (self.m > 1 and not np.all(np.diff(level, axis=-1) < 0.0)):
                raise InvalidInput("every node sample must be positive and strictly descending")
        z = float(np.sum(weights))
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "p", weights / z)

    @property
    def k(self) -> int:
        return self.params.k

    @property
    def n_leaves(self) -> int:
        return self.m**self.k

    def digits(self, leaves: Optional[np.ndarray] = None) -> np.ndarray:
        """Base-m addresses, shape (len(leaves), k)."""
        leaves = np.arange(self.n_leaves) if leaves is None else np.asarray(leaves, dtype=np.int64)
        powers = self.m ** np.arange(self.k - 1, -1, -1, dtype=np.int64)
        return (leaves[:, None] // powers) % self.m

    def ancestors(self, depth: int, leaves: Optional[np.ndarray] = None) -> np.ndarray:
        """Index of the depth-`depth` node above each leaf (depth 0 is the root)."""
        leaves = np.arange(self.n_leaves) if leaves is None else np.asarray(leaves, dtype=np.int64)
        return leaves // self.m ** (self.k - depth)

    def subtree_weights(self, depth: int) -> np.ndarray:
        return self.p.reshape(self.m**depth, -1).sum(axis=1)

    def to_dict(self) -> dict:
        return {
            "params": self.params.to_dict(),
            "m": self.m,
            "factors": [level.tolist() for level in self.factors],
            "weights": self.weights.tolist(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "Cascade":
        try:
            params = OrderParameter.from_dict(data["params"])
            factors = tuple(np.asarray(level, dtype=float) for level in data["factors"])
            return cls(params, int(data["m"]), factors)
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInput(f"Invalid cascade fixture: {e}")


def _check_params(params: OrderParameter, m: int) -> None:
    if params.k < 1:
        raise InvalidInput("a cascade needs at least one level (k >= 1)")
    if params.x[-1] >= 1.0:
        raise InvalidInput(f"cascade levels need x_k < 1, got x_k = {params.x[-1]}")
    if m < 1:
        raise InvalidInput(f"branching m must be >= 1, got {m}")
    if float(m) ** params.k > MAX_LEAVES:
        raise InvalidInput(f"leaf count m^k = {m}^{params.k} exceeds {MAX_LEAVES}")


def build_cascade(params: OrderParameter, m: int, rng) -> Cascade:
    """
    Independent REM_{x_j} samples at every depth-(j−1) node, each truncated
    to its exact top-m atoms.
    """
    _check_params(params, m)
    rng = as_generator(rng)
    factors = []
    for j, xj in enumerate(params.x):
        arrivals = np.cumsum(rng.standard_exponential((m**j, m)), axis=1)
        factors.append(arrivals ** (-1.0 / xj))
    return Cascade(params, m, tuple(factors))


# ---------------------------------------------------------------------------
# Overlaps
# ---------------------------------------------------------------------------


def _overlap_values(params: OrderParameter) -> np.ndarray:
    # prefix length j → q_{j+1}; j = k (same leaf) → 1
    return np.array(params.q + (1.0,))


def shared_prefix(cascade: Cascade, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    da = cascade.digits(a)
    db = cascade.digits(b)
    return np.cumprod(da == db, axis=1).sum(axis=1)


def overlap_kernel(cascade: Cascade, a: int, b: int) -> float:
    for leaf in (a, b):
        if isinstance(leaf, bool) or not 0 <= int(leaf) < cascade.n_leaves:
            raise InvalidInput(f"invalid leaf address {leaf!r}; cascade has {cascade.n_leaves} leaves")
    if a == b:
        return 1.0
    prefix = int(shared_prefix(cascade, np.array([a]), np.array([b]))[0])
    return float(_overlap_values(cascade.params)[prefix])


def overlap_matrix(cascade: Cascade, leaves: Optional[Sequence[int]] = None) -> np.ndarray:
    leaves = np.arange(cascade.n_leaves) if leaves is None else np.asarray(leaves, dtype=np.int64)
    if leaves.size > DENSE_LEAVES:
        raise InvalidInput(f"dense overlap matrix limited to {DENSE_LEAVES} leaves, got {leaves.size}")
    digits = cascade.digits(leaves)
    same = digits[:, None, :] == digits[None, :, :]
    prefix = np.cumprod(same, axis=2).sum(axis=2)
    return _overlap_values(cascade.params)[prefix]


def is_ultrametric(q: np.ndarray, atol: float = 0.0) -> bool:
    """q(a, c) ≥ min(q(a, b), q(b, c)) for every triple."""
    q = np.asarray(q, dtype=float)
    for b in range(q.shape[0]):
        if np.any(q < np.minimum(q[:, b][:, None], q[b, :][None, :]) - atol):
            return False
    return True


def tree_embedding(cascade: Cascade, variance: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> np.ndarray:
    """
    Rows e_α with e_α·e_α' = v(q(α, α')), v the identity by default.

    One block per depth j = 0..k with entry √(v(q_{j+1}) − v(q_j)) on the
    ancestor's column (v(q_0) taken as 0).
    """
    if cascade.n_leaves > DENSE_LEAVES:
        raise InvalidInput(f"tree embedding limited to {DENSE_LEAVES} leaves, got {cascade.n_leaves}")
    scales = _level_scales(cascade.params, None, variance)
    blocks = []
    for depth, scale in enumerate(scales):
        block = np.zeros((cascade.n_leaves, cascade.m**depth))
        block[np.arange(cascade.n_leaves), cascade.ancestors(depth)] = scale
        blocks.append(block)
    return np.hstack(blocks)


def sample_replicas(cascade: Cascade, n_replicas: int, rng) -> np.ndarray:
    """Leaf indices drawn iid from the normalized weights."""
    rng = as_generator(rng)
    cdf = np.cumsum(cascade.p)
    draws = np.searchsorted(cdf, rng.random(int(n_replicas)) * cdf[-1], side="right")
    return np.minimum(draws, cascade.n_leaves - 1)


def coincidence_profile(cascade: Cascade) -> np.ndarray:
    """P(shared prefix ≥ j) = Σ (depth-j subtree weight)² for j = 1..k."""
    return np.array([float(np.sum(cascade.subtree_weights(j) ** 2)) for j in range(1, cascade.k + 1)])


@dataclass(frozen=True)
class OverlapLawReport:
    levels: Tuple[float, ...]
    expected: Tuple[float, ...]
    sampled: Tuple[float, ...]
    exact: Tuple[Estimate, ...]
    below_first: float

    @property
    def max_deviation(self) -> float:
        return max(abs(s - e) for s, e in zip(self.sampled, self.expected))

    @property
    def max_exact_deviation(self) -> float:
        return max(abs(s.value - e) for s, e in zip(self.exact, self.expected))

    def to_dict(self) -> dict:
        return {
            "q": list(self.levels),
            "x": list(self.expected),
            "cdf_sampled": list(self.sampled),
            "cdf_exact": [e.value for e in self.exact],
            "cdf_exact_stderr": [e.stderr for e in self.exact],
            "cdf_below_q1": self.below_first,
            "max_deviation": self.max_deviation,
        }


def two_replica_overlap_law(
    params: OrderParameter,
    m: int,
    cascades: int,
    pairs_per_cascade: int,
    seed=0,
    threads: int = 1,
) -> OverlapLawReport:
    """
    Empirical P(q_12 ≤ q_j) at every level against x(q_j) = x_j.

    `sampled` comes from replica pairs; `exact` averages the per-cascade
    value 1 − Σ (depth-j subtree weight)².
    """
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    values = _overlap_values(params)

    def one(i: int) -> Tuple[np.ndarray, np.ndarray, int]:
        cascade = build_cascade(params, m, seeds.generator(i, 0))
        rng = seeds.generator(i, 1)
        a = sample_replicas(cascade, pairs_per_cascade, rng)
        b = sample_replicas(cascade, pairs_per_cascade, rng)
        q12 = values[shared_prefix(cascade, a, b)]
        counts = np.array([np.sum(q12 <= qj) for qj in params.q])
        below = int(np.sum(q12 < params.q[0]))
        return counts, 1.0 - coincidence_profile(cascade), below

    results = parallel_map(one, range(cascades), threads)
    total = cascades * pairs_per_cascade
    sampled = np.sum([r[0] for r in results], axis=0) / total
    exact_rows = np.vstack([r[1] for r in results])
    below = sum(r[2] for r in results) / total
    return OverlapLawReport(
        levels=tuple(params.q),
        expected=tuple(params.x),
        sampled=tuple(float(v) for v in sampled),
        exact=tuple(Estimate.from_samples(exact_rows[:, j]) for j in range(params.k)),
        below_first=float(below),
    )


def partition_law_test(params: OrderParameter, m: int, cascades: int, seed=0, reference_m: Optional[int] = None) -> Dict[str, float]:
    """
    KS test of log Z against log(c·Z_{x_1}) where
    c = Π_{n≥2} (E Z_{x_n}^{x_{n−1}})^{1/x_{n−1}} from the closed-form moment.
    """
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    constant = 1.0
    for prev, cur in zip(params.x[:-1], params.x[1:]):
        constant *= rem_partition_moment(cur, prev) ** (1.0 / prev)
    reference_m = reference_m or m
    log_z = np.array([math.log(build_cascade(params, m, seeds.generator(i, 0)).z) for i in range(cascades)])
    log_ref = np.array(
        [math.log(constant * float(np.sum(sample_rem_top(params.x[0], reference_m, seeds.generator(i, 1)).points))) for i in range(cascades)]
    )
    result = stats.ks_2samp(log_z, log_ref)
    return {
        "constant": constant,
        "statistic": float(result.statistic),
        "p_value": float(result.pvalue),
        "passed": bool(result.pvalue > KS_THRESHOLD),
    }


# ---------------------------------------------------------------------------
# Tree-indexed Gaussian fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class HierarchicalField:
    """values[i, α] = η_{i,α}; covariance across α is v(min(t, q(α, α')))."""

    values: np.ndarray
    t: Optional[float]


def _level_scales(
    params: OrderParameter,
    t: Optional[float],
    variance: Optional[Callable[[np.ndarray], np.ndarray]],
) -> np.ndarray:
    bounds = np.array(params.boundaries())
    if t is not None:
        bounds = np.minimum(bounds, t)
    v = np.asarray(variance(bounds) if variance is not None else bounds, dtype=float)
    # The root block starts from zero variance.
    increments = np.diff(np.concatenate(([0.0], v[1:])))
    if np.any(increments < -1e-14):
        raise InvalidInput("variance profile must be nondecreasing on [0, 1]")
    return np.sqrt(np.maximum(increments, 0.0))


def hierarchical_field(
    cascade: Cascade,
    n_copies: int,
    rng,
    t: Optional[float] = None,
    variance: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> HierarchicalField:
    """
    η_{i,α} = Σ_{j=0..k} s_j Z_{i, node_j(α)} with independent standard
    normals attached to every depth-j node and s_j² = v(q_{j+1}∧t) − v(q_j∧t).

    `variance` is v (identity by default; f'(q)/2 for a general covariance).
    """
    if t is not None and not 0.0 <= t <= 1.0:
        raise InvalidInput(f"t must lie in [0, 1], got {t}")
    rng = as_generator(rng)
    scales = _level_scales(cascade.params, t, variance)
    values = np.zeros((int(n_copies), cascade.n_leaves))
    for depth, scale in enumerate(scales):
        nodes = cascade.m**depth
        z = rng.standard_normal((int(n_copies), nodes))
        if scale == 0.0:
            continue
        values += np.repeat(scale * z, cascade.n_leaves // nodes, axis=1)
    return HierarchicalField(values, t)


# ---------------------------------------------------------------------------
# Quasi-stationarity
# ---------------------------------------------------------------------------


def evolve_cascade(cascade: Cascade, psi: PsiFunction, rng, field_values: Optional[np.ndarray] = None) -> np.ndarray:
    """Normalized weights ξ_α e^{ψ(η_α)}, sorted descending."""
    if not isinstance(psi, PsiFunction):
        raise InvalidInput("evolve_cascade needs a built-in psi function with a declared Lipschitz bound")
    psi.check_lipschitz()
    if field_values is None:
        field_values = hierarchical_field(cascade, 1, rng).values[0]
    log_w = np.log(cascade.weights) + np.asarray(psi(field_values), dtype=float)
    log_w -= log_w.max()
    w = np.exp(log_w)
    return np.sort(w / w.sum())[::-1]


def _top_normalized(cascade: Cascade, top_n: int) -> np.ndarray:
    if cascade.n_leaves < top_n:
        raise InvalidInput(f"cascade has {cascade.n_leaves} leaves, fewer than top_n={top_n}")
    return np.sort(cascade.p)[::-1][:top_n]


def cascade_quasi_stationarity_test(
    params: OrderParameter,
    m: int,
    psi: PsiFunction,
    top_n: int,
    trials: int,
    seed=0,
    reference_params: Optional[OrderParameter] = None,
    threads: int = 1,
) -> KSReport:
    """
    Top-n normalized evolved weights against fresh cascades built from
    `reference_params` (the same params unless a negative control is wanted).
    """
    psi.check_lipschitz()
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    reference = reference_params or params

    def trial(i: int) -> Tuple[np.ndarray, np.ndarray]:
        base = build_cascade(params, m, seeds.generator(i, 0))
        evolved = evolve_cascade(base, psi, seeds.generator(i, 1))
        fresh = build_cascade(reference, m, seeds.generator(i, 2))
        if evolved.size < top_n:
            raise InvalidInput(f"cascade has {evolved.size} leaves, fewer than top_n={top_n}")
        return evolved[:top_n], _top_normalized(fresh, top_n)

    results = parallel_map(trial, range(trials), threads)
    return per_rank_ks(
        "cascade",
        np.vstack([r[0] for r in results]),
        np.vstack([r[1] for r in results]),
    )


def martingale_invariance_test(
    params: OrderParameter,
    beta: float,
    h: float,
    m: int,
    times: Sequence[float] = (0.25, 0.5, 0.75, 1.0),
    top_n: int = 10,
    trials: int = 500,
    seed=0,
    threads: int = 1,
) -> Dict[float, KSReport]:
    """
    For each t, normalized weights ξ_α e^{f(t, η_α(t))} (f from the Parisi
    recursion, η(t) the t-truncated field) against fresh cascades.
    """
    from .parisi import martingale_weight

    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    reports: Dict[float, KSReport] = {}
    for slot, t in enumerate(times):

        def trial(i: int, t=t, slot=slot) -> Tuple[np.ndarray, np.ndarray]:
            base = build_cascade(params, m, seeds.generator(slot, i, 0))
            eta = hierarchical_field(base, 1, seeds.generator(slot, i, 1), t=t).values[0]
            log_w = np.log(base.weights) + martingale_weight(params, beta, h, t, eta)
            log_w -= log_w.max()
            w = np.exp(log_w)
            evolved = np.sort(w / w.sum())[::-1][:top_n]
            fresh = build_cascade(params, m, seeds.generator(slot, i, 2))
            return evolved, _top_normalized(fresh, top_n)

        results = parallel_map(trial, range(trials), threads)
        reports[float(t)] = per_rank_ks(
            f"t={t}", np.vstack([r[0] for r in results]), np.vstack([r[1] for r in results])
        )
    return reports


def lipschitz_profile(params: OrderParameter, psi: PsiFunction, settings=None) -> List[float]:
    """
    Largest |∂f/∂y| of f(q_j, ·) on the y-grid for every level of the
    recursion started from the boundary ψ, listed from q_{k+1} = 1 down to q_0.
    """
    from .parisi import SolverSettings, solve_recursive

    settings = settings or SolverSettings()
    solution = solve_recursive(params, beta=psi.lipschitz, h=0.0, settings=settings, boundary=psi)
    return solution.lipschitz_profile()
