# spinglass_lab/sk_model.py

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional, Tuple
import logging
import math

import numpy as np
from scipy import linalg
from scipy.special import logsumexp

from .core import CovarianceSeries, as_spin_config
from .exceptions import InvalidInput, NumericalFailure
from .gaussian import GaussianFamily, InterpolationTerms, interpolation_derivative, psd_factor
from .utils import LN2, Estimate, SeedSpec, as_generator, gauss_legendre, parallel_map

logger = logging.getLogger(__name__)

ENUMERATION_GUARD = 24
GENERAL_GUARD = 12
INTERPOLATION_GUARD = 10
# Configurations evaluated per enumeration block.
BLOCK_BITS = 14


class Variant(str, Enum):
    CLASSIC = "classic"
    DIAGONAL = "diagonal"
    GENERAL = "general"


@dataclass(frozen=True)
class DisorderSample:
    """
    One disorder realization.

    classic:  −H = N^{-1/2} Σ_{i<j} J_ij σ_i σ_j + h Σ σ_i
    diagonal: −H = (2N)^{-1/2} Σ_{i,j} J_ij σ_i σ_j + h Σ σ_i
    general:  −H = K(σ) + h Σ σ_i with Cov K = (N/2) f(q); `process` holds
              K on every configuration, indexed as in enumerate_configurations.
    """

    n_spins: int
    couplings: Optional[np.ndarray]
    variant: Variant = Variant.CLASSIC
    h: float = 0.0
    beta: float = 1.0
    covariance: Optional[CovarianceSeries] = None
    process: Optional[np.ndarray] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if self.n_spins < 1:
            raise InvalidInput(f"N must be >= 1, got {self.n_spins}")
        if self.beta < 0.0 or not math.isfinite(self.beta):
            raise InvalidInput(f"beta must be finite and >= 0, got {self.beta}")
        if not math.isfinite(self.h):
            raise InvalidInput(f"h must be finite, got {self.h}")
        if self.variant is Variant.GENERAL:
            if self.process is not None and self.process.shape != (2**self.n_spins,):
                raise InvalidInput(f"general-f process must have 2^N = {2**self.n_spins} entries")
        elif self.couplings is None or self.couplings.shape != (self.n_spins, self.n_spins):
            raise InvalidInput(f"couplings must be an {self.n_spins}x{self.n_spins} matrix")

    def with_beta(self, beta: float) -> "DisorderSample":
        return DisorderSample(self.n_spins, self.couplings, self.variant, self.h, beta, self.covariance, self.process)

    def interaction_matrix(self) -> np.ndarray:
        """A with interaction energy σᵀAσ, so that H = σᵀAσ − hΣσ."""
        n = self.n_spins
        if self.variant is Variant.CLASSIC:
            upper = np.triu(self.couplings, 1)
            return -(upper + upper.T) / (2.0 * math.sqrt(n))
        if self.variant is Variant.DIAGONAL:
            return -(self.couplings + self.couplings.T) / (2.0 * math.sqrt(2.0 * n))
        raise InvalidInput("the general-f variant has no coupling matrix")


def sample_disorder(
    n_spins: int,
    beta: float,
    h: float,
    variant: Variant | str,
    rng,
    covariance: Optional[CovarianceSeries] = None,
) -> DisorderSample:
    rng = as_generator(rng)
    variant = Variant(variant)
    if variant is Variant.GENERAL:
        if n_spins > GENERAL_GUARD:
            raise InvalidInput(f"general-f variant realizes a 2^N vector; N={n_spins} exceeds guard {GENERAL_GUARD}")
        covariance = covariance or CovarianceSeries.sk()
        spins = enumerate_configurations(n_spins).astype(float)
        overlaps = np.clip(spins @ spins.T / n_spins, -1.0, 1.0)
        factor = psd_factor(0.5 * n_spins * covariance.f(overlaps))
        process = factor.transform(rng.standard_normal(factor.rank))
        return DisorderSample(n_spins, None, variant, h, beta, covariance, process)
    couplings = rng.standard_normal((n_spins, n_spins))
    return DisorderSample(n_spins, couplings, variant, h, beta)


def restrict(d: DisorderSample, n: int) -> DisorderSample:
    """The system on the first n spins, with couplings rescaled by its own size."""
    if d.variant is Variant.GENERAL:
        raise InvalidInput("general-f samples cannot be restricted")
    if not 1 <= n <= d.n_spins:
        raise InvalidInput(f"restriction size {n} outside 1..{d.n_spins}")
    return DisorderSample(n, d.couplings[:n, :n], d.variant, d.h, d.beta)


# ---------------------------------------------------------------------------
# Enumeration
# ---------------------------------------------------------------------------


def enumerate_configurations(n_spins: int, start: int = 0, stop: Optional[int] = None) -> np.ndarray:
    """
    Configurations with indices in [start, stop); σ_i = +1 when bit i of the
    index is 0. Index 0 is the all-plus state.
    """
    stop = 2**n_spins if stop is None else stop
    idx = np.arange(start, stop, dtype=np.int64)
    bits = (idx[:, None] >> np.arange(n_spins, dtype=np.int64)) & 1
    return (1 - 2 * bits).astype(np.int8)


def configuration_index(spins) -> int:
    spins = as_spin_config(spins)
    return int(np.sum((spins == -1).astype(np.int64) << np.arange(spins.size, dtype=np.int64)))


def _block_energies(d: DisorderSample, start: int, stop: int, spins: Optional[np.ndarray] = None) -> np.ndarray:
    if spins is None:
        spins = enumerate_configurations(d.n_spins, start, stop)
    s = spins.astype(float)
    field = d.h * s.sum(axis=1)
    if d.variant is Variant.GENERAL:
        if d.process is None:
            raise InvalidInput("general-f energies need a realized process; sample the disorder first")
        return -d.process[start:stop] - field
    a = d.interaction_matrix()
    return np.sum((s @ a) * s, axis=1) - field


def _check_guard(d: DisorderSample) -> None:
    guard = GENERAL_GUARD if d.variant is Variant.GENERAL else ENUMERATION_GUARD
    if d.n_spins > guard:
        raise InvalidInput(f"exact enumeration is limited to N <= {guard} for the {d.variant.value} variant, got N={d.n_spins}")


def _blocks(n_spins: int) -> List[Tuple[int, int]]:
    total = 2**n_spins
    size = min(total, 2**BLOCK_BITS)
    return [(lo, min(lo + size, total)) for lo in range(0, total, size)]


def hamiltonian(d: DisorderSample, sigma) -> float:
    """H(σ) for one configuration."""
    sigma = as_spin_config(sigma)
    if sigma.size != d.n_spins:
        raise InvalidInput(f"configuration has {sigma.size} spins, disorder has {d.n_spins}")
    if d.variant is Variant.GENERAL:
        idx = configuration_index(sigma)
        return float(_block_energies(d, idx, idx + 1, spins=sigma[None, :])[0])
    return float(_block_energies(d, 0, 1, spins=sigma[None, :])[0])


def exact_log_partition(d: DisorderSample) -> float:
    """ln Σ_σ exp(−βH(σ)), blockwise with a log-sum-exp reduction."""
    _check_guard(d)
    if d.beta == 0.0:
        return d.n_spins * LN2
    partial = [logsumexp(-d.beta * _block_energies(d, lo, hi)) for lo, hi in _blocks(d.n_spins)]
    return float(logsumexp(partial))


def gibbs_energy(d: DisorderSample) -> float:
    """Gibbs average ⟨H⟩/N."""
    _check_guard(d)
    log_z = exact_log_partition(d)
    total = 0.0
    for lo, hi in _blocks(d.n_spins):
        energies = _block_energies(d, lo, hi)
        total += float(np.sum(energies * np.exp(-d.beta * energies - log_z)))
    return total / d.n_spins


def gibbs_states(d: DisorderSample) -> Tuple[np.ndarray, np.ndarray]:
    """All configurations with their energies (small N only)."""
    _check_guard(d)
    spins = enumerate_configurations(d.n_spins)
    return spins, _block_energies(d, 0, spins.shape[0], spins=spins)


# ---------------------------------------------------------------------------
# Quenched averages
# ---------------------------------------------------------------------------


def _as_seed(seed) -> SeedSpec:
    return seed if isinstance(seed, SeedSpec) else SeedSpec(int(seed))


def _disorder_values(fn, n_disorder: int, threads: int) -> np.ndarray:
    if n_disorder < 1:
        raise InvalidInput(f"n_disorder must be >= 1, got {n_disorder}")
    return np.asarray(parallel_map(fn, range(n_disorder), threads), dtype=float)


def quenched_pressure(
    n_spins: int,
    beta: float,
    h: float,
    variant: Variant | str = Variant.CLASSIC,
    n_disorder: int = 100,
    seed=0,
    threads: int = 1,
    covariance: Optional[CovarianceSeries] = None,
) -> Estimate:
    """(1/N) E ln Z_N over `n_disorder` draws; draw i uses stream (seed, i)."""
    seeds = _as_seed(seed)
    guard = GENERAL_GUARD if Variant(variant) is Variant.GENERAL else ENUMERATION_GUARD
    if n_spins > guard:
        raise InvalidInput(f"exact enumeration is limited to N <= {guard}, got N={n_spins}")
    if beta == 0.0:
        return Estimate(LN2, 0.0, int(n_disorder))

    def one(i: int) -> float:
        d = sample_disorder(n_spins, beta, h, variant, seeds.generator(i), covariance)
        return exact_log_partition(d) / n_spins

    return Estimate.from_samples(_disorder_values(one, n_disorder, threads))


def quenched_energy(
    n_spins: int,
    beta: float,
    h: float,
    variant: Variant | str = Variant.CLASSIC,
    n_disorder: int = 100,
    seed=0,
    threads: int = 1,
) -> Estimate:
    """E ⟨H⟩/N with the same disorder streams as quenched_pressure."""
    seeds = _as_seed(seed)

    def one(i: int) -> float:
        return gibbs_energy(sample_disorder(n_spins, beta, h, variant, seeds.generator(i)))

    return Estimate.from_samples(_disorder_values(one, n_disorder, threads))


@dataclass(frozen=True)
class SuperadditivityResult:
    parts: Estimate
    whole: Estimate
    gap: Estimate

    def to_dict(self) -> dict:
        return {
            "Q_N+Q_M": self.parts.value,
            "Q_N+M": self.whole.value,
            "gap": self.gap.value,
            "stderr": self.gap.stderr,
        }


def superadditivity_experiment(
    n: int,
    m: int,
    beta: float,
    h: float,
    n_disorder: int,
    seed=0,
    threads: int = 1,
) -> SuperadditivityResult:
    """
    Q_{N+M} − Q_N − Q_M with Q_N = E ln Z_N for the diagonal variant.

    The three systems use independent disorder streams.
    """
    if n + m > ENUMERATION_GUARD:
        raise InvalidInput(f"N+M={n + m} exceeds the enumeration guard {ENUMERATION_GUARD}")
    seeds = _as_seed(seed)
    if beta == 0.0:
        exact = Estimate((n + m) * LN2, 0.0, n_disorder)
        return SuperadditivityResult(exact, exact, Estimate(0.0, 0.0, n_disorder))
    p_n = quenched_pressure(n, beta, h, Variant.DIAGONAL, n_disorder, seeds.child(0), threads)
    p_m = quenched_pressure(m, beta, h, Variant.DIAGONAL, n_disorder, seeds.child(1), threads)
    p_nm = quenched_pressure(n + m, beta, h, Variant.DIAGONAL, n_disorder, seeds.child(2), threads)
    parts_value = n * p_n.value + m * p_m.value
    parts_err = math.hypot(n * p_n.stderr, m * p_m.stderr)
    whole = Estimate((n + m) * p_nm.value, (n + m) * p_nm.stderr, n_disorder)
    gap = Estimate(whole.value - parts_value, math.hypot(whole.stderr, parts_err), n_disorder)
    return SuperadditivityResult(Estimate(parts_value, parts_err, n_disorder), whole, gap)


def incremental_pressure(
    n: int,
    m: int,
    beta: float,
    h: float,
    n_disorder: int,
    seed=0,
    variant: Variant | str = Variant.DIAGONAL,
    threads: int = 1,
) -> Estimate:
    """
    (1/M) E ln(Z_{N+M}/Z_N) with paired samples.

    Both systems read the same coupling matrix; the N-system uses its
    leading N×N block with its own 1/√N scaling.
    """
    if n < 0 or m < 1:
        raise InvalidInput(f"need N >= 0 and M >= 1, got N={n}, M={m}")
    if n + m > ENUMERATION_GUARD:
        raise InvalidInput(f"N+M={n + m} exceeds the enumeration guard {ENUMERATION_GUARD}")
    if Variant(variant) is Variant.GENERAL:
        raise InvalidInput("incremental pressure needs coupling matrices; use the classic or diagonal variant")
    seeds = _as_seed(seed)
    if beta == 0.0:
        return Estimate(LN2, 0.0, n_disorder)

    def one(i: int) -> float:
        d = sample_disorder(n + m, beta, h, variant, seeds.generator(i))
        small = exact_log_partition(restrict(d, n)) if n > 0 else 0.0
        return (exact_log_partition(d) - small) / m

    return Estimate.from_samples(_disorder_values(one, n_disorder, threads))


def telescoping_increments(
    n_spins: int,
    beta: float,
    h: float,
    variant: Variant | str = Variant.CLASSIC,
    n_disorder: int = 10,
    seed=0,
    threads: int = 1,
) -> np.ndarray:
    """
    Increments ln Z_{n+1} − ln Z_n for n = 0..N−1 on nested systems.

    Row i uses the same stream as quenched_pressure's draw i, so the row
    mean reproduces that draw's (1/N) ln Z_N.
    """
    seeds = _as_seed(seed)
    if Variant(variant) is Variant.GENERAL:
        raise InvalidInput("telescoping needs coupling matrices; use the classic or diagonal variant")

    def one(i: int) -> np.ndarray:
        d = sample_disorder(n_spins, beta, h, variant, seeds.generator(i))
        logs = [0.0] + [exact_log_partition(restrict(d, k)) for k in range(1, n_spins + 1)]
        return np.diff(logs)

    return np.vstack(parallel_map(one, range(n_disorder), threads))


# ---------------------------------------------------------------------------
# Interpolation route to superadditivity
# ---------------------------------------------------------------------------


def gt_interpolation_family(n: int, m: int, beta: float, h: float) -> Tuple[np.ndarray, GaussianFamily]:
    """
    Weights e^{βhΣγ} and the covariance path of the interpolating process

        C(t) = t (N+M)/2 q_γ² + (1 − t)(N/2 q_α² + M/2 q_σ²)

    over all configurations γ = (α, σ) of N+M spins.
    """
    if n < 1 or m < 1:
        raise InvalidInput(f"need N, M >= 1, got N={n}, M={m}")
    if n + m > INTERPOLATION_GUARD:
        raise InvalidInput(f"N+M={n + m} exceeds the interpolation guard {INTERPOLATION_GUARD}")
    spins = enumerate_configurations(n + m).astype(float)
    alpha, sigma = spins[:, :n], spins[:, n:]
    q_full = spins @ spins.T / (n + m)
    q_alpha = alpha @ alpha.T / n
    q_sigma = sigma @ sigma.T / m
    whole = 0.5 * (n + m) * q_full**2
    parts = 0.5 * n * q_alpha**2 + 0.5 * m * q_sigma**2
    weights = np.exp(beta * h * spins.sum(axis=1))
    family = GaussianFamily(
        path=lambda t: t * whole + (1.0 - t) * parts,
        path_derivative=lambda t: whole - parts,
    )
    return weights, family


def interpolation_terms(n: int, m: int, beta: float, h: float, t: float, samples: int, seed=0) -> InterpolationTerms:
    weights, family = gt_interpolation_family(n, m, beta, h)
    return interpolation_derivative(weights, beta, family, t, _as_seed(seed).generator(), samples)


def superadditivity_by_interpolation(
    n: int,
    m: int,
    beta: float,
    h: float,
    samples: int,
    seed=0,
    order: int = 8,
    threads: int = 1,
) -> Estimate:
    """Gap Q_{N+M} − Q_N − Q_M as the t-integral of the interpolation derivative."""
    weights, family = gt_interpolation_family(n, m, beta, h)
    nodes, w = gauss_legendre(order)
    seeds = _as_seed(seed)

    def at(i: int) -> Estimate:
        return interpolation_derivative(weights, beta, family, float(nodes[i]), seeds.generator(i), samples).derivative

    terms = parallel_map(at, range(order), threads)
    value = float(sum(wi * e.value for wi, e in zip(w, terms)))
    stderr = math.sqrt(sum((wi * e.stderr) ** 2 for wi, e in zip(w, terms)))
    return Estimate(value, stderr, samples * order)


# ---------------------------------------------------------------------------
# Ground-state heuristics
# ---------------------------------------------------------------------------


def _require_zero_field(d: DisorderSample, allowed: Tuple[Variant, ...]) -> None:
    if d.variant not in allowed:
        raise InvalidInput(f"ground-state heuristic supports {[v.value for v in allowed]}, got {d.variant.value}")
    if d.h != 0.0:
        raise InvalidInput(f"ground-state heuristics are defined at h = 0, got h={d.h}")


def greedy_ground_state(d: DisorderSample) -> Tuple[np.ndarray, float]:
    """
    σ_1 = +1, then σ_i = sign(Σ_{j<i} J_ji σ_j), a zero field giving +1.

    Each step picks the sign that lowers H through the new couplings. Returns
    (σ, H(σ)/N).
    """
    _require_zero_field(d, (Variant.CLASSIC,))
    n = d.n_spins
    upper = np.triu(d.couplings, 1)
    sigma = np.ones(n)
    for i in range(1, n):
        local = float(upper[:i, i] @ sigma[:i])
        sigma[i] = -1.0 if local < 0.0 else 1.0
    energy = -float(sigma @ upper @ sigma) / math.sqrt(n)
    return sigma.astype(np.int8), energy / n


def spectral_ground_state(d: DisorderSample) -> Tuple[np.ndarray, float]:
    """
    σ_i = sign(ψ_i) for the lowest eigenvector ψ of the interaction matrix A
    (H = σᵀAσ at h = 0); zero components go to +1.

    The eigenvector's sign is fixed so that its first nonzero component is
    positive. Returns (σ, H(σ)/N).
    """
    _require_zero_field(d, (Variant.CLASSIC, Variant.DIAGONAL))
    a = d.interaction_matrix()
    try:
        _, vectors = linalg.eigh(a, subset_by_index=[0, 0])
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailure(f"eigendecomposition failed for N={d.n_spins}: {e}")
    psi = vectors[:, 0]
    nonzero = np.flatnonzero(psi)
    if nonzero.size and psi[nonzero[0]] < 0.0:
        psi = -psi
    sigma = np.where(psi < 0.0, -1.0, 1.0)
    return sigma.astype(np.int8), float(sigma @ a @ sigma) / d.n_spins


GROUND_STATE_ALGORITHMS = {
    "greedy": greedy_ground_state,
    "spectral": spectral_ground_state,
}


def ground_state_experiment(
    algorithm: str,
    n_spins: int,
    n_disorder: int,
    seed=0,
    threads: int = 1,
) -> Estimate:
    """Mean H/N of a heuristic over classic h = 0 disorder draws."""
    if algorithm not in GROUND_STATE_ALGORITHMS:
        raise InvalidInput(f"Unknown ground-state algorithm '{algorithm}'. Use one of: {', '.join(GROUND_STATE_ALGORITHMS)}")
    solver = GROUND_STATE_ALGORITHMS[algorithm]
    seeds = _as_seed(seed)

    def one(i: int) -> float:
        return solver(sample_disorder(n_spins, 1.0, 0.0, Variant.CLASSIC, seeds.generator(i)))[1]

    return Estimate.from_samples(_disorder_values(one, n_disorder, threads))
