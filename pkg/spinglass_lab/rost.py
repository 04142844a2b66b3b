# spinglass_lab/rost.py

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy.special import logsumexp

from .cascade import Cascade, build_cascade, hierarchical_field, overlap_matrix
from .core import CovarianceSeries, OrderParameter
from .exceptions import InvalidInput
from .gaussian import TAIL_TOLERANCE, psd_factor, truncate_weights
from .parisi import SolverSettings, parisi_functional
from .sk_model import ENUMERATION_GUARD, DisorderSample, Variant, gibbs_states, incremental_pressure, quenched_pressure, sample_disorder
from .utils import LN2, Estimate, SeedSpec, as_generator, check_finite, difference, log_cosh, parallel_map

logger = logging.getLogger(__name__)

DENSE_STATES = 4000
CONTRACTION_BUDGET = 50_000_000
SOURCES = ("cascade", "sk_gibbs", "custom")


@dataclass(frozen=True, eq=False)
class RostSample:
    """
    One realization of a random overlap structure.

    `weights` are positive and descending. Overlaps come from exactly one of
    a dense matrix, a Gram embedding (rows e_n with q_{n,n'} = e_n·e_n') or
    the cascade the weights were read from (`order` maps storage position to
    leaf index).
    """

    weights: np.ndarray
    source: str = "custom"
    overlaps: Optional[np.ndarray] = field(default=None, repr=False)
    embedding: Optional[np.ndarray] = field(default=None, repr=False)
    cascade: Optional[Cascade] = field(default=None, repr=False)
    order: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def n_states(self) -> int:
        return int(self.weights.size)

    @property
    def log_weights(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return np.log(self.weights)

    def overlap_matrix(self, count: Optional[int] = None) -> np.ndarray:
        count = self.n_states if count is None else int(count)
        if count > DENSE_STATES:
            raise InvalidInput(f"dense overlap matrix limited to {DENSE_STATES} states, got {count}")
        if self.overlaps is not None:
            return self.overlaps[:count, :count]
        if self.embedding is not None:
            e = self.embedding[:count]
            return e @ e.T
        return overlap_matrix(self.cascade, self.order[:count])


def validate_rost(sample: RostSample, atol: float = 1e-12) -> RostSample:
    """Check positive descending summable weights and a unit-diagonal PSD overlap kernel."""
    w = np.asarray(sample.weights, dtype=float)
    if w.ndim != 1 or w.size == 0:
        raise InvalidInput("ROSt weights must be a nonempty vector")
    if not np.all(np.isfinite(w)) or np.any(w < 0.0):
        raise InvalidInput("ROSt weights must be finite and nonnegative")
    if np.any(np.diff(w) > 0.0):
        raise InvalidInput("ROSt weights must be stored in descending order")
    total = float(w.sum())
    if not (0.0 < total < math.inf):
        raise InvalidInput(f"ROSt weights must have a positive finite sum, got {total}")
    if sample.source not in SOURCES:
        raise InvalidInput(f"Unknown ROSt source '{sample.source}'. Use one of: {', '.join(SOURCES)}")

    routes = [sample.overlaps is not None, sample.embedding is not None, sample.cascade is not None]
    if sum(routes) != 1:
        raise InvalidInput("a ROSt needs exactly one of overlaps, embedding or cascade")
    if sample.overlaps is not None:
        q = np.asarray(sample.overlaps, dtype=float)
        if q.shape != (w.size, w.size):
            raise InvalidInput(f"overlap matrix must be {w.size}x{w.size}, got {q.shape}")
        if not np.allclose(np.diag(q), 1.0, rtol=0.0, atol=atol):
            raise InvalidInput("overlap matrix must have unit diagonal")
        if np.any(np.abs(q) > 1.0 + atol):
            raise InvalidInput("overlaps must satisfy |q| <= 1")
        psd_factor(q)
    elif sample.embedding is not None:
        e = np.asarray(sample.embedding, dtype=float)
        if e.shape[0] != w.size:
            raise InvalidInput(f"embedding has {e.shape[0]} rows for {w.size} states")
        if not np.allclose(np.einsum("ij,ij->i", e, e), 1.0, rtol=0.0, atol=atol):
            raise InvalidInput("embedding rows must have unit norm")
    else:
        if sample.order is None or sample.order.shape != w.shape:
            raise InvalidInput("cascade-backed ROSt needs a leaf order matching the weights")
    return sample


def rost_from_weights(weights: Sequence[float], overlaps) -> RostSample:
    """Custom ROSt; states are reordered by descending weight."""
    w = np.asarray(weights, dtype=float)
    q = np.asarray(overlaps, dtype=float)
    if q.shape != (w.size, w.size):
        raise InvalidInput(f"overlap matrix must be {w.size}x{w.size}, got {q.shape}")
    order = np.argsort(-w, kind="stable")
    return validate_rost(RostSample(w[order], "custom", overlaps=q[np.ix_(order, order)]))


def rost_from_cascade(cascade: Cascade) -> RostSample:
    order = np.argsort(-cascade.weights, kind="stable")
    return validate_rost(RostSample(cascade.weights[order], "cascade", cascade=cascade, order=order))


def rost_from_sk_gibbs(d: DisorderSample) -> RostSample:
    """All 2^N configurations with Gibbs weights and embedding σ/√N."""
    spins, energies = gibbs_states(d)
    log_w = -d.beta * energies
    log_w = log_w - log_w.max()
    order = np.argsort(-log_w, kind="stable")
    embedding = spins[order].astype(float) / math.sqrt(d.n_spins)
    return validate_rost(RostSample(np.exp(log_w[order]), "sk_gibbs", embedding=embedding))


# ---------------------------------------------------------------------------
# Cavity fields
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CavityFields:
    """κ per kept state and η^i per added spin and kept state."""

    kappa: np.ndarray
    eta: np.ndarray
    weights: np.ndarray
    tail_mass: float
    route: str

    @property
    def log_weights(self) -> np.ndarray:
        return np.log(self.weights)


def _tensor_field(e: np.ndarray, power: int, rng: np.random.Generator, copies: int) -> np.ndarray:
    """⟨e^{⊗power}, W⟩ for iid normal W, shape (copies, n); covariance (e·e')^power."""
    n, d = e.shape
    if power == 0:
        return np.repeat(rng.standard_normal((copies, 1)), n, axis=1)
    w = rng.standard_normal((copies,) + (d,) * power)
    out = np.empty((copies, n))
    for c in range(copies):
        acc = e @ w[c].reshape(d, -1)  # (n, d^{power-1})
        for _ in range(power - 1):
            acc = np.einsum("nd,ndk->nk", e, acc.reshape(n, d, -1))
        out[c] = acc.reshape(n)
    return out


def _series_field(e: np.ndarray, terms: Sequence[Tuple[int, float]], rng, copies: int) -> np.ndarray:
    total = np.zeros((copies, e.shape[0]))
    for power, scale in terms:
        if scale > 0.0:
            total += math.sqrt(scale) * _tensor_field(e, power, rng, copies)
    return total


def cavity_fields(
    rost: RostSample,
    m_spins: int,
    covariance: Optional[CovarianceSeries],
    rng,
    tail: float = TAIL_TOLERANCE,
) -> CavityFields:
    """
    Draw κ with Cov φ(q)/2 and M independent η families with Cov f'(q)/2.

    States past cumulative weight tail `tail` are dropped first. Cascade
    ROSts draw along the tree; embedded ROSts contract iid tensors with
    the embedding; anything else uses a pivoted factorization of the dense
    covariance (at most 4000 kept states).
    """
    if m_spins < 1:
        raise InvalidInput(f"M must be >= 1, got {m_spins}")
    covariance = covariance or CovarianceSeries.sk()
    rng = as_generator(rng)

    if rost.cascade is not None:
        cascade = rost.cascade
        eta = hierarchical_field(cascade, m_spins, rng, variance=covariance.variance_profile).values
        kappa = hierarchical_field(cascade, 1, rng, variance=covariance.kappa_profile).values[0]
        order = rost.order
        return CavityFields(kappa[order], eta[:, order], rost.weights, 0.0, "tree")

    kept, tail_mass = truncate_weights(rost.weights, tail)
    weights = rost.weights[:kept]

    if rost.embedding is not None:
        e = rost.embedding[:kept]
        top = max(r for r, _ in covariance.coefficients)
        if kept * e.shape[1] ** top <= CONTRACTION_BUDGET:
            # f'(q)/2 = Σ r c_r q^{r−1}/2 and φ(q)/2 = Σ (r−1) c_r q^r/2.
            eta_terms = [(r - 1, r * c / 2.0) for r, c in covariance.coefficients]
            kappa_terms = [(r, (r - 1) * c / 2.0) for r, c in covariance.coefficients]
            eta = _series_field(e, eta_terms, rng, m_spins)
            kappa = _series_field(e, kappa_terms, rng, 1)[0]
            return CavityFields(kappa, eta, weights, tail_mass, "embedding")

    if kept > DENSE_STATES:
        raise InvalidInput(
            f"{kept} states remain after truncation at tail {tail}; dense cavity sampling is limited to {DENSE_STATES}"
        )
    q = np.clip(rost.overlap_matrix(kept), -1.0, 1.0)
    try:
        eta_factor = psd_factor(covariance.variance_profile(q))
        kappa_factor = psd_factor(covariance.kappa_profile(q))
    except InvalidInput as e:
        raise InvalidInput(f"cavity covariance is not PSD (invalid ROSt?): {e.detail}")
    eta = eta_factor.transform(rng.standard_normal((m_spins, eta_factor.rank)))
    kappa = kappa_factor.transform(rng.standard_normal((1, kappa_factor.rank)))[0]
    return CavityFields(kappa, eta, weights, tail_mass, "dense")


# ---------------------------------------------------------------------------
# ROSt sources and the G functional
# ---------------------------------------------------------------------------


class RostSource(ABC):
    name: str

    @abstractmethod
    def draw(self, rng: np.random.Generator) -> RostSample: ...

    @abstractmethod
    def describe(self) -> dict: ...


@dataclass(frozen=True)
class CascadeSource(RostSource):
    params: OrderParameter
    m: int = 200
    name = "cascade"

    def draw(self, rng):
        return rost_from_cascade(build_cascade(self.params, self.m, rng))

    def describe(self):
        return {**self.params.to_dict(), "m": self.m}


@dataclass(frozen=True)
class SKGibbsSource(RostSource):
    n_spins: int
    beta: float
    h: float = 0.0
    variant: Variant = Variant.DIAGONAL
    name = "sk_gibbs"

    def draw(self, rng):
        return rost_from_sk_gibbs(sample_disorder(self.n_spins, self.beta, self.h, self.variant, rng))

    def describe(self):
        return {"N": self.n_spins, "variant": Variant(self.variant).value}


@dataclass(frozen=True, eq=False)
class FixedSource(RostSource):
    sample: RostSample
    name = "custom"

    def draw(self, rng):
        return self.sample

    def describe(self):
        return {"states": self.sample.n_states}


@dataclass(frozen=True)
class GFunctional:
    G: Estimate
    G1: Estimate
    G2: Estimate
    source: str
    params: dict
    beta: float
    h: float
    M: int
    seed: int

    def to_dict(self) -> dict:
        return {
            "G": self.G.value,
            "G1": self.G1.value,
            "G2": self.G2.value,
            "stderr": self.G.stderr,
            "source": self.source,
            "params": self.params,
            "beta": self.beta,
            "h": self.h,
            "M": self.M,
            "seed": self.seed,
        }


def _log_ratio(log_w: np.ndarray, exponent: np.ndarray) -> float:
    """ln(Σ ξ e^{exponent} / Σ ξ)."""
    return float(logsumexp(log_w + exponent) - logsumexp(log_w))


def _cavity_terms(fields: CavityFields, m_spins: int, beta: float, h: float) -> Tuple[float, float]:
    log_w = fields.log_weights
    # Σ_τ e^{β Σ_i (η^i + h) τ_i} = Π_i 2 cosh(β(η^i + h))
    spins = np.sum(LN2 + log_cosh(beta * (fields.eta + h)), axis=0)
    v_term = _log_ratio(log_w, spins)
    k_term = _log_ratio(log_w, beta * math.sqrt(m_spins) * fields.kappa)
    return v_term, k_term


def g_functional_estimate(
    source: RostSource,
    m_spins: int,
    beta: float,
    h: float,
    covariance: Optional[CovarianceSeries] = None,
    n_outer: int = 1000,
    seed=0,
    threads: int = 1,
) -> GFunctional:
    """
    G_M = G1 − G2 with
        G1 = (1/M) E ln[Σ ξ Π_i 2cosh(β(η^i + h)) / Σ ξ],
        G2 = (1/M) E ln[Σ ξ e^{β√M κ} / Σ ξ],
    one fresh ROSt realization and fresh fields per outer sample.
    """
    if n_outer < 1:
        raise InvalidInput(f"n_outer must be >= 1, got {n_outer}")
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))

    def one(i: int) -> Tuple[float, float]:
        rost = source.draw(seeds.generator(i, 0))
        fields = cavity_fields(rost, m_spins, covariance, seeds.generator(i, 1))
        if fields.tail_mass > TAIL_TOLERANCE:
            logger.warning("cavity sampling dropped tail mass %.3g above %.1g", fields.tail_mass, TAIL_TOLERANCE)
        v_term, k_term = _cavity_terms(fields, m_spins, beta, h)
        return v_term / m_spins, k_term / m_spins

    rows = np.asarray(parallel_map(one, range(n_outer), threads), dtype=float)
    check_finite(rows, "G functional summands")
    return GFunctional(
        G=Estimate.from_samples(rows[:, 0] - rows[:, 1]),
        G1=Estimate.from_samples(rows[:, 0]),
        G2=Estimate.from_samples(rows[:, 1]),
        source=source.name,
        params=source.describe(),
        beta=float(beta),
        h=float(h),
        M=int(m_spins),
        seed=seeds.root_seed,
    )


@dataclass(frozen=True)
class IntegrabilityReport:
    kappa_term: Estimate
    kappa_bound: float
    v_term: Estimate
    v_bound: float

    @property
    def holds(self) -> bool:
        return (
            self.kappa_term.value <= self.kappa_bound + 3.0 * self.kappa_term.stderr
            and self.v_term.value <= self.v_bound + 3.0 * self.v_term.stderr
        )

    def to_dict(self) -> dict:
        return {
            "kappa_term": self.kappa_term.to_dict(),
            "kappa_bound": self.kappa_bound,
            "v_term": self.v_term.to_dict(),
            "v_bound": self.v_bound,
            "holds": self.holds,
        }


def integrability_bounds_check(
    source: RostSource,
    m_spins: int,
    beta: float,
    h: float = 0.0,
    covariance: Optional[CovarianceSeries] = None,
    n_outer: int = 1000,
    seed=0,
    threads: int = 1,
) -> IntegrabilityReport:
    """
    E|ln(Σξ e^{β√M κ}/Σξ)| against β²M s²/2 + 2β√M s with s² = φ(1)/2
    (β²M/4 + β√(2M) for SK), and E|ln(Σξ Π 2cosh(β(η^i+h))/Σξ)| against
    M(ln 2 + ln cosh βh + β² f'(1)/4).
    """
    covariance = covariance or CovarianceSeries.sk()
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))

    def one(i: int) -> Tuple[float, float]:
        rost = source.draw(seeds.generator(i, 0))
        fields = cavity_fields(rost, m_spins, covariance, seeds.generator(i, 1))
        v_term, k_term = _cavity_terms(fields, m_spins, beta, h)
        return abs(k_term), abs(v_term)

    rows = np.asarray(parallel_map(one, range(n_outer), threads), dtype=float)
    s = math.sqrt(float(covariance.kappa_profile(1.0)))
    kappa_bound = beta * beta * m_spins * s * s / 2.0 + 2.0 * beta * math.sqrt(m_spins) * s
    v_bound = m_spins * (LN2 + float(log_cosh(beta * h)) + beta * beta * float(covariance.fprime(1.0)) / 4.0)
    return IntegrabilityReport(
        kappa_term=Estimate.from_samples(rows[:, 0]),
        kappa_bound=kappa_bound,
        v_term=Estimate.from_samples(rows[:, 1]),
        v_bound=v_bound,
    )


# ---------------------------------------------------------------------------
# Finite-N comparisons
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GuerraGap:
    functional: float
    pressure: Estimate
    gap: Estimate

    @property
    def holds(self) -> bool:
        return self.gap.value >= -3.0 * self.gap.stderr

    def to_dict(self) -> dict:
        return {
            "P[x]": self.functional,
            "P_N": self.pressure.value,
            "P_N_stderr": self.pressure.stderr,
            "gap": self.gap.value,
            "stderr": self.gap.stderr,
            "holds": self.holds,
        }


def guerra_gap(
    n_spins: int,
    params: OrderParameter,
    beta: float,
    h: float,
    n_disorder: int,
    seed=0,
    variant: Variant | str = Variant.DIAGONAL,
    settings: Optional[SolverSettings] = None,
    threads: int = 1,
) -> GuerraGap:
    """P[x] − P_N with P_N from exact enumeration."""
    functional = parisi_functional(params, beta, h, settings)
    pressure = quenched_pressure(n_spins, beta, h, variant, n_disorder, seed, threads)
    if beta == 0.0:
        # Both sides are ln 2.
        return GuerraGap(functional, pressure, Estimate(0.0, 0.0, pressure.samples))
    gap = Estimate(functional - pressure.value, pressure.stderr, pressure.samples)
    if not gap.value >= -3.0 * gap.stderr:
        logger.warning("Guerra gap %.6g below -3 stderr (%.3g) at N=%d beta=%s h=%s", gap.value, gap.stderr, n_spins, beta, h)
    return GuerraGap(functional, pressure, gap)


@dataclass(frozen=True)
class SaturationReport:
    g_functional: GFunctional
    increment: Estimate
    difference: Estimate
    envelope: float

    def to_dict(self) -> dict:
        return {
            "G_M": self.g_functional.G.to_dict(),
            "incremental_pressure": self.increment.to_dict(),
            "difference": self.difference.to_dict(),
            "envelope": self.envelope,
        }


def saturation_probe(
    n_spins: int,
    m_spins: int,
    beta: float,
    h: float,
    n_disorder: int,
    seed=0,
    variant: Variant | str = Variant.DIAGONAL,
    threads: int = 1,
) -> SaturationReport:
    """G_M of the N-spin Gibbs ROSt against (1/M) E ln(Z_{N+M}/Z_N)."""
    if m_spins < 1 or 4 * m_spins > n_spins:
        raise InvalidInput(f"saturation probe needs 1 <= M <= N/4, got N={n_spins}, M={m_spins}")
    if n_spins + m_spins > ENUMERATION_GUARD:
        raise InvalidInput(f"N+M={n_spins + m_spins} exceeds the enumeration guard {ENUMERATION_GUARD}")
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    envelope = 2.0 * m_spins / n_spins * beta * beta
    if beta == 0.0:
        exact = Estimate(LN2, 0.0, n_disorder)
        params = {"N": n_spins, "variant": Variant(variant).value}
        g = GFunctional(exact, exact, Estimate(0.0, 0.0, n_disorder), "sk_gibbs", params, 0.0, float(h), m_spins, seeds.root_seed)
        return SaturationReport(g, exact, Estimate(0.0, 0.0, n_disorder), envelope)
    source = SKGibbsSource(n_spins, beta, h, Variant(variant))
    g = g_functional_estimate(source, m_spins, beta, h, None, n_disorder, seeds.child(0), threads)
    increment = incremental_pressure(n_spins, m_spins, beta, h, n_disorder, seeds.child(1), variant, threads)
    return SaturationReport(g, increment, difference(g.G, increment), envelope)


@dataclass(frozen=True)
class SaturationTrend:
    reports: Tuple[SaturationReport, ...]
    n_values: Tuple[int, ...]

    @property
    def gaps(self) -> Tuple[float, ...]:
        return tuple(abs(r.difference.value) for r in self.reports)

    @property
    def shrinks(self) -> bool:
        """|difference| at the larger N is no larger than at the smaller N, within 3σ."""
        small, large = (r.difference for r in self.reports)
        slack = 3.0 * math.hypot(small.stderr, large.stderr)
        return abs(large.value) <= abs(small.value) + slack

    def to_dict(self) -> dict:
        return {
            "N": list(self.n_values),
            "gaps": list(self.gaps),
            "reports": [r.to_dict() for r in self.reports],
            "shrinks": self.shrinks,
        }


def saturation_trend(
    n_values: Sequence[int],
    m_spins: int,
    beta: float,
    h: float,
    n_disorder: int,
    seed=0,
    variant: Variant | str = Variant.DIAGONAL,
    threads: int = 1,
) -> SaturationTrend:
    """`saturation_probe` at two increasing N with the same M; reports whether the gap shrinks."""
    n_values = tuple(int(n) for n in n_values)
    if len(n_values) != 2 or not n_values[0] < n_values[1]:
        raise InvalidInput(f"saturation trend needs two increasing sizes, got {list(n_values)}")
    seeds = seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))
    reports = tuple(
        saturation_probe(n, m_spins, beta, h, n_disorder, seeds.child(i), variant, threads)
        for i, n in enumerate(n_values)
    )
    return SaturationTrend(reports, n_values)
