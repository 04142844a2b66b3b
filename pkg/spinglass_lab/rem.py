# spinglass_lab/rem.py

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .exceptions import InvalidInput
from .laws import IncrementLaw
from .utils import Estimate, SeedSpec, as_generator, parallel_map

logger = logging.getLogger(__name__)

MAX_EXPECTED_POINTS = 1e7
KS_THRESHOLD = 0.01
QS_MODES = ("normalized", "corrected", "uncorrected")


def _check_x(x: float) -> None:
    if not 0.0 < x < 1.0:
        raise InvalidInput(f"x must lie in (0, 1), got {x}")


@dataclass(frozen=True)
class PointConfiguration:
    """
    Descending sample of REM_x points above the truncation threshold epsilon.

    `tail_mass` is the expected mass the sample does not hold; None means the
    untouched process, whose tail is x ε^{1−x}/(1−x).
    """

    x: float
    epsilon: float
    points: np.ndarray
    tail_mass: Optional[float] = None

    def __post_init__(self):
        _check_x(self.x)
        if not self.epsilon >= 0.0:
            raise InvalidInput(f"epsilon must be >= 0, got {self.epsilon}")
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 1:
            raise InvalidInput("points must be a 1-D array")
        if pts.size and not np.all(pts > self.epsilon):
            raise InvalidInput("every point must exceed epsilon")
        if pts.size > 1 and not np.all(np.diff(pts) < 0.0):
            raise InvalidInput("points must be strictly descending")
        if self.tail_mass is not None and not self.tail_mass >= 0.0:
            raise InvalidInput(f"tail_mass must be >= 0, got {self.tail_mass}")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    def __len__(self) -> int:
        return int(self.points.size)

    def normalized(self) -> np.ndarray:
        total = float(np.sum(self.points))
        return self.points / total if total > 0.0 else self.points.copy()

    def to_dict(self) -> dict:
        data = {"x": self.x, "epsilon": self.epsilon, "points": self.points.tolist()}
        if self.tail_mass is not None:
            data["tail_mass"] = self.tail_mass
        return data

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "PointConfiguration":
        try:
            tail = data.get("tail_mass")
            return cls(
                float(data["x"]),
                float(data["epsilon"]),
                np.asarray(data["points"], dtype=float),
                None if tail is None else float(tail),
            )
        except (KeyError, TypeError) as e:
            raise InvalidInput(f"Invalid point configuration: {e}")


def sample_rem(x: float, epsilon: float, rng) -> PointConfiguration:
    """Poisson(ε^{-x}) points ε·U^{-1/x}, sorted descending."""
    _check_x(x)
    if not epsilon > 0.0:
        raise InvalidInput(f"epsilon must be > 0, got {epsilon}")
    mean = epsilon ** (-x)
    if mean > MAX_EXPECTED_POINTS:
        raise InvalidInput(
            f"expected point count {mean:.3g} exceeds {MAX_EXPECTED_POINTS:.0g}; use epsilon >= {MAX_EXPECTED_POINTS ** (-1.0 / x):.3g}"
        )
    rng = as_generator(rng)
    count = int(rng.poisson(mean))
    points = epsilon * rng.random(count) ** (-1.0 / x)
    return PointConfiguration(x, epsilon, np.sort(points)[::-1])


def sample_rem_top(x: float, m: int, rng) -> PointConfiguration:
    """
    Exact top-m atoms: ξ_n = Γ_n^{-1/x} with Γ_n unit-rate arrival times.

    epsilon is set to the (m+1)-th atom so every retained point exceeds it.
    """
    _check_x(x)
    if m < 1:
        raise InvalidInput(f"m must be >= 1, got {m}")
    rng = as_generator(rng)
    arrivals = np.cumsum(rng.standard_exponential(m + 1))
    atoms = arrivals ** (-1.0 / x)
    return PointConfiguration(x, float(atoms[m]), atoms[:m])


@dataclass(frozen=True)
class PartitionSum:
    z: float
    tail_bound: float


def truncation_tail(x: float, epsilon: float) -> float:
    """E Σ_{ξ<ε} ξ = x ε^{1−x}/(1−x)."""
    return x * epsilon ** (1.0 - x) / (1.0 - x)


def partition_sum(cfg: PointConfiguration) -> PartitionSum:
    tail = truncation_tail(cfg.x, cfg.epsilon) if cfg.tail_mass is None else cfg.tail_mass
    return PartitionSum(float(np.sum(cfg.points)), tail)


def rem_partition_moment(x: float, s: float) -> float:
    """E Z^s = Γ(1−x)^{s/x} Γ(1 − s/x) / Γ(1 − s) for the full process, s < x."""
    _check_x(x)
    if not s < x:
        raise InvalidInput(f"E Z^s is finite only for s < x, got s={s}, x={x}")
    return math.exp((s / x) * gammaln(1.0 - x) + gammaln(1.0 - s / x) - gammaln(1.0 - s))


def coincidence_probability(points: np.ndarray) -> float:
    """Σ p_n² for the normalized weights."""
    p = np.asarray(points, dtype=float)
    p = p / p.sum()
    return float(np.sum(p * p))


# ---------------------------------------------------------------------------
# Ensemble laws
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderStatisticReport:
    scaled_means: Tuple[float, ...]
    available: Tuple[int, ...]
    max_transform_mean: Estimate
    partial: bool

    def to_dict(self) -> dict:
        return {
            "n": list(range(1, len(self.scaled_means) + 1)),
            "scaled_mean": list(self.scaled_means),
            "available": list(self.available),
            "max_transform_mean": self.max_transform_mean.to_dict(),
            "partial": self.partial,
        }


def order_statistic_law_check(x: float, epsilon: float, n_max: int, draws: int, seed=0) -> OrderStatisticReport:
    """
    Ensemble mean of n^{1/x} ξ_n for n ≤ n_max, plus the mean of ξ_1^{-x}
    (an Exp(1) variable for the untruncated process).
    """
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    sums = np.zeros(n_max)
    counts = np.zeros(n_max, dtype=int)
    maxima = []
    for i in range(draws):
        pts = sample_rem(x, epsilon, seeds.generator(i)).points[:n_max]
        k = pts.size
        sums[:k] += np.arange(1, k + 1) ** (1.0 / x) * pts
        counts[:k] += 1
        maxima.append(pts[0] ** (-x) if k else epsilon ** (-x))
    partial = bool(np.any(counts < draws))
    if partial:
        logger.warning(
            "only %d of %d draws reach rank %d; trajectory is partial", int(counts[-1]), draws, n_max
        )
    means = tuple(float(s / c) if c else float("nan") for s, c in zip(sums, counts))
    return OrderStatisticReport(means, tuple(int(c) for c in counts), Estimate.from_samples(maxima), partial)


def occupation_counts(
    x: float, epsilon: float, edges: Sequence[float], draws: int, seed=0
) -> Dict[str, np.ndarray]:
    """
    Counts of points in consecutive intervals [edges_i, edges_{i+1}) (last
    interval open to infinity). Returns per-draw counts, their means, the
    expected means a^{-x} − b^{-x} and the correlation matrix.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 1 or np.any(np.diff(edges) <= 0.0) or edges[0] <= epsilon:
        raise InvalidInput("edges must increase strictly and start above epsilon")
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    bounds = np.append(edges, np.inf)
    counts = np.empty((draws, edges.size))
    for i in range(draws):
        pts = sample_rem(x, epsilon, seeds.generator(i)).points
        counts[i] = np.histogram(pts, bins=bounds)[0]
    upper = np.append(edges[1:] ** (-x), 0.0)
    expected = edges ** (-x) - upper
    corr = np.corrcoef(counts, rowvar=False) if edges.size > 1 else np.ones((1, 1))
    return {"counts": counts, "mean": counts.mean(axis=0), "expected": expected, "correlation": corr}


def power_sum_trend(
    x: float, epsilons: Sequence[float], powers: Sequence[float], draws: int, seed=0
) -> Dict[float, List[float]]:
    """Ensemble mean of Σ ξ^v at each epsilon, for each power v."""
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    out: Dict[float, List[float]] = {float(v): [] for v in powers}
    for j, eps in enumerate(epsilons):
        totals = {float(v): 0.0 for v in powers}
        for i in range(draws):
            pts = sample_rem(x, eps, seeds.generator(j, i)).points
            for v in totals:
                totals[v] += float(np.sum(pts ** v))
        for v in totals:
            out[v].append(totals[v] / draws)
    return out


def addition_law_test(x: float, epsilon: float, draws: int, seed=0) -> Dict[str, float]:
    """
    KS comparison of Z(first ∪ second) for independent samples against
    2^{1/x}·Z of a single sample.
    """
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    union = np.empty(draws)
    scaled = np.empty(draws)
    for i in range(draws):
        union[i] = partition_sum(sample_rem(x, epsilon, seeds.generator(i, 0))).z + partition_sum(
            sample_rem(x, epsilon, seeds.generator(i, 1))
        ).z
        scaled[i] = 2.0 ** (1.0 / x) * partition_sum(sample_rem(x, epsilon, seeds.generator(i, 2))).z
    result = stats.ks_2samp(union, scaled)
    return {"statistic": float(result.statistic), "p_value": float(result.pvalue), "passed": bool(result.pvalue > KS_THRESHOLD)}


def partition_moment_stability(x: float, u: float, epsilon: float, draws: int, seed=0) -> Dict[str, float]:
    """
    Compare E Z^u from the first half of the draws with the full ensemble.

    For u < x the ratio settles near one; for u ≥ x it typically does not.
    A qualitative heavy-tail diagnostic only.
    """
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    z = np.array([partition_sum(sample_rem(x, epsilon, seeds.generator(i))).z for i in range(draws)])
    powered = z ** u
    half = float(np.mean(powered[: draws // 2]))
    full = float(np.mean(powered))
    return {"half": half, "full": full, "ratio": full / half if half > 0.0 else float("inf")}


# ---------------------------------------------------------------------------
# Multiplicative evolution
# ---------------------------------------------------------------------------


def evolve(cfg: PointConfiguration, law: IncrementLaw, rng) -> Tuple[PointConfiguration, np.ndarray]:
    """
    ξ̃ = γ·ξ re-sorted descending; returns the new configuration and the
    increments γ̃ carried along by the permutation.

    Points below ε are not resampled, so atoms that would move above the new
    cutoff ε·min γ are missing. Their expected mass ⟨γ⟩ times the old tail is
    carried in `tail_mass` and reported by `partition_sum`.
    """
    rng = as_generator(rng)
    gamma = np.asarray(law.sample(rng, len(cfg)), dtype=float)
    if gamma.size and not np.all(gamma > 0.0):
        raise InvalidInput(f"increment law {law!r} produced a nonpositive value")
    moved = gamma * cfg.points
    order = np.argsort(-moved, kind="stable")
    new_eps = cfg.epsilon * float(gamma.min()) if gamma.size else cfg.epsilon
    old_tail = partition_sum(cfg).tail_bound
    return PointConfiguration(cfg.x, new_eps, moved[order], law.moment(1.0) * old_tail), gamma[order]


@dataclass(frozen=True)
class KSReport:
    mode: str
    statistics: Tuple[float, ...]
    p_values: Tuple[float, ...]
    combined_p: float

    @property
    def passed(self) -> bool:
        return self.combined_p > KS_THRESHOLD

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "rank": list(range(1, len(self.statistics) + 1)),
            "statistic": list(self.statistics),
            "p_value": list(self.p_values),
            "combined_p": self.combined_p,
            "passed": self.passed,
        }


def per_rank_ks(mode: str, first: np.ndarray, second: np.ndarray) -> KSReport:
    """Two-sample KS per column with a Bonferroni-combined p-value."""
    stat_list, p_list = [], []
    for col in range(first.shape[1]):
        result = stats.ks_2samp(first[:, col], second[:, col])
        stat_list.append(float(result.statistic))
        p_list.append(float(result.pvalue))
    combined = min(1.0, min(p_list) * len(p_list))
    return KSReport(mode, tuple(stat_list), tuple(p_list), combined)


def _top(cfg: PointConfiguration, top_n: int, normalize: bool) -> np.ndarray:
    if len(cfg) < top_n:
        raise InvalidInput(
            f"configuration has {len(cfg)} points, fewer than top_n={top_n}; decrease epsilon"
        )
    values = cfg.normalized() if normalize else cfg.points
    return values[:top_n]


def quasi_stationarity_test(
    x: float,
    law: IncrementLaw,
    epsilon: float,
    top_n: int,
    trials: int,
    seed=0,
    mode: str = "normalized",
    threads: int = 1,
) -> KSReport:
    """
    Compare the top_n of evolved configurations with fresh REM_x samples.

    normalized:  ξ̃_n/Z̃ against ξ_n/Z (K cancels)
    corrected:   ξ̃_n/K against ξ_n
    uncorrected: ξ̃_n against ξ_n (fails whenever K ≠ 1)
    """
    if mode not in QS_MODES:
        raise InvalidInput(f"Invalid quasi-stationarity mode '{mode}'. Use one of: {', '.join(QS_MODES)}")
    _check_x(x)
    if epsilon ** (-x) < 2 * top_n:
        raise InvalidInput(f"epsilon={epsilon} leaves too few points for top_n={top_n}; decrease epsilon")
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    scale = law.correction(x) if mode == "corrected" else 1.0
    normalize = mode == "normalized"

    def trial(i: int) -> Tuple[np.ndarray, np.ndarray]:
        fresh = sample_rem(x, epsilon, seeds.generator(i, 0))
        base = sample_rem(x, epsilon, seeds.generator(i, 1))
        evolved, _ = evolve(base, law, seeds.generator(i, 2))
        return _top(evolved, top_n, normalize) / scale, _top(fresh, top_n, normalize)

    results = parallel_map(trial, range(trials), threads)
    evolved = np.vstack([r[0] for r in results])
    fresh = np.vstack([r[1] for r in results])
    return per_rank_ks(mode, evolved, fresh)


@dataclass(frozen=True)
class TiltReport:
    p_value: float
    statistic: float
    rank_correlation: float
    correlation_bound: float
    empirical_mass: Tuple[float, ...]
    expected_mass: Tuple[float, ...]

    @property
    def passed(self) -> bool:
        return self.p_value > KS_THRESHOLD and abs(self.rank_correlation) <= self.correlation_bound

    def to_dict(self) -> dict:
        return {
            "p_value": self.p_value,
            "statistic": self.statistic,
            "rank_correlation": self.rank_correlation,
            "correlation_bound": self.correlation_bound,
            "empirical_mass": list(self.empirical_mass),
            "expected_mass": list(self.expected_mass),
            "passed": self.passed,
        }


def tilted_increment_test(
    x: float,
    law: IncrementLaw,
    epsilon: float,
    top_n: int,
    trials: int,
    seed=0,
    threads: int = 1,
) -> TiltReport:
    """
    Increments attached to the top_n evolved points against the tilted law
    γ^x g(dγ)/⟨γ^x⟩, plus a check that log γ̃_n is uncorrelated with the rank n.
    """
    _check_x(x)
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))

    def trial(i: int) -> np.ndarray:
        base = sample_rem(x, epsilon, seeds.generator(i, 0))
        evolved, gamma = evolve(base, law, seeds.generator(i, 1))
        if len(evolved) < top_n:
            raise InvalidInput(f"configuration has {len(evolved)} points, fewer than top_n={top_n}; decrease epsilon")
        return gamma[:top_n]

    gammas = np.vstack(parallel_map(trial, range(trials), threads))
    pooled = gammas.ravel()
    tilted = law.tilted(x)

    if law.discrete:
        support, probs = tilted.support()
        observed = np.array([np.sum(pooled == v) for v in support], dtype=float)
        empirical = observed / pooled.size
        if support.size > 1:
            result = stats.chisquare(observed, probs * pooled.size)
            statistic, p_value = float(result.statistic), float(result.pvalue)
        else:
            statistic, p_value = 0.0, 1.0
        expected = tuple(float(p) for p in probs)
    else:
        result = stats.kstest(pooled, tilted.cdf)
        statistic, p_value = float(result.statistic), float(result.pvalue)
        empirical, expected = np.array([]), ()

    ranks = np.broadcast_to(np.arange(1, top_n + 1), gammas.shape).ravel()
    logs = np.log(pooled)
    if np.ptp(logs) == 0.0:
        correlation = 0.0
    else:
        correlation = float(stats.pearsonr(logs, ranks).statistic)
    return TiltReport(
        p_value=p_value,
        statistic=statistic,
        rank_correlation=correlation,
        correlation_bound=3.0 / math.sqrt(pooled.size),
        empirical_mass=tuple(float(v) for v in empirical),
        expected_mass=expected,
    )
