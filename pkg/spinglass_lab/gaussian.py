# spinglass_lab/gaussian.py

from dataclasses import dataclass, field
from itertools import product
from typing import Callable, Optional, Sequence, Tuple
import logging
import math

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from scipy.special import logsumexp, softmax

from .exceptions import InvalidInput, NumericalFailure
from .utils import Estimate, as_generator, check_finite, gauss_hermite

logger = logging.getLogger(__name__)

PSD_RTOL = 1e-10
# Default finite-difference step for t-derivatives of a covariance path.
FD_STEP = 1e-3
TAIL_TOLERANCE = 1e-8

Matrix = np.ndarray
Psi = Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# Factorization
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PSDFactor:
    """cov ≈ factor @ factor.T with factor of shape (n, rank)."""

    factor: np.ndarray
    pivot: np.ndarray
    rank: int

    def transform(self, z: np.ndarray) -> np.ndarray:
        """Map standard normals of shape (..., rank) to samples of shape (..., n)."""
        return z @ self.factor.T


def _check_symmetric(cov: np.ndarray) -> np.ndarray:
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InvalidInput(f"covariance must be a square matrix, got shape {cov.shape}")
    check_finite(cov, "covariance matrix")
    scale = max(1.0, float(np.max(np.abs(cov)))) if cov.size else 1.0
    if not np.allclose(cov, cov.T, rtol=0.0, atol=1e-12 * scale):
        raise InvalidInput("covariance matrix is not symmetric")
    return 0.5 * (cov + cov.T)


def _residual_check(cov: np.ndarray, factor: np.ndarray, pivot: np.ndarray, rank: int, tol: float) -> None:
    if rank == cov.shape[0]:
        return
    # A PSD Schur complement with diagonal below tol has every entry below tol.
    residual = np.abs(cov - factor @ factor.T)
    worst = float(residual.max())
    if worst > tol * (1.0 + 1e-6):
        offending = int(pivot[rank])
        raise InvalidInput(
            f"covariance is not positive semidefinite: pivot {rank + 1} (index {offending}) "
            f"leaves residual {worst:.3e} above tolerance {tol:.3e}"
        )


def psd_factor(cov: Matrix, pivot: Optional[Sequence[int]] = None) -> PSDFactor:
    """
    Pivoted square-root factorization of a PSD matrix.

    Pivots below 1e-10·trace are treated as zero and the factor is truncated
    to the numerical rank. When `pivot` is given (a previous factorization's
    order) the same elimination order is reused, which keeps the factor a
    smooth function of the matrix for common-random-number comparisons.
    """
    cov = _check_symmetric(cov)
    n = cov.shape[0]
    trace = float(np.trace(cov))
    if n == 0:
        return PSDFactor(np.zeros((0, 0)), np.zeros(0, dtype=int), 0)
    if trace < 0.0 or np.any(np.diag(cov) < -PSD_RTOL * max(abs(trace), 1.0)):
        worst = int(np.argmin(np.diag(cov)))
        raise InvalidInput(f"covariance is not positive semidefinite: pivot 1 (index {worst}) has negative variance")
    tol = PSD_RTOL * trace
    if trace == 0.0:
        return PSDFactor(np.zeros((n, 0)), np.arange(n), 0)

    if pivot is not None:
        fixed = _factor_in_order(cov, np.asarray(pivot, dtype=int), tol)
        if fixed is not None:
            return fixed
        logger.debug("fixed-order factorization failed, falling back to fresh pivoting")

    c, piv, rank, info = lapack.dpstrf(cov, tol=tol, lower=1)
    if info < 0:
        raise NumericalFailure(f"dpstrf rejected argument {-info}")
    perm = np.asarray(piv, dtype=int) - 1
    lower = np.tril(c)[:, :rank]
    factor = np.zeros((n, rank))
    factor[perm] = lower
    _residual_check(cov, factor, perm, rank, tol)
    return PSDFactor(factor, perm, int(rank))


def _factor_in_order(cov: np.ndarray, perm: np.ndarray, tol: float) -> Optional[PSDFactor]:
    n = cov.shape[0]
    if sorted(perm.tolist()) != list(range(n)):
        raise InvalidInput(f"pivot must be a permutation of 0..{n - 1}")
    permuted = cov[np.ix_(perm, perm)]
    diag = np.diag(permuted)
    # Keep the leading block whose diagonal stays above tolerance.
    rank = n
    for i in range(n):
        if diag[i] <= tol:
            rank = i
            break
    if rank == 0:
        return None
    try:
        l11 = linalg.cholesky(permuted[:rank, :rank], lower=True)
    except linalg.LinAlgError:
        return None
    l21 = linalg.solve_triangular(l11, permuted[rank:, :rank].T, lower=True).T
    lower = np.vstack([l11, l21])
    factor = np.zeros((n, rank))
    factor[perm] = lower
    try:
        _residual_check(cov, factor, perm, rank, tol)
    except InvalidInput:
        return None
    return PSDFactor(factor, perm, rank)


# ---------------------------------------------------------------------------
# Families and measures
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GaussianFamily:
    """
    Centered Gaussian vector with a fixed covariance or a covariance path C(t).

    When only `path` is given, Ċ(t) falls back to a central finite
    difference with step FD_STEP.
    """

    covariance: Optional[Matrix] = None
    path: Optional[Callable[[float], Matrix]] = None
    path_derivative: Optional[Callable[[float], Matrix]] = None

    def __post_init__(self):
        if self.covariance is None and self.path is None:
            raise InvalidInput("GaussianFamily needs a covariance matrix or a covariance path")
        if self.covariance is not None:
            object.__setattr__(self, "covariance", _check_symmetric(self.covariance))

    @classmethod
    def linear(cls, start: Matrix, end: Matrix) -> "GaussianFamily":
        """C(t) = (1 − t)·start + t·end."""
        start = _check_symmetric(start)
        end = _check_symmetric(end)
        if start.shape != end.shape:
            raise InvalidInput(f"index mismatch: {start.shape} vs {end.shape}")
        return cls(
            path=lambda t: (1.0 - t) * start + t * end,
            path_derivative=lambda t: end - start,
        )

    @property
    def parameterized(self) -> bool:
        return self.path is not None

    def covariance_at(self, t: Optional[float] = None) -> np.ndarray:
        if self.path is None:
            return self.covariance
        if t is None:
            raise InvalidInput("a parameterized family needs a value of t")
        return _check_symmetric(self.path(float(t)))

    def derivative_at(self, t: float, step: float = FD_STEP) -> np.ndarray:
        if self.path is None:
            return np.zeros_like(self.covariance)
        if self.path_derivative is not None:
            return np.asarray(self.path_derivative(float(t)), dtype=float)
        return (self.covariance_at(t + step) - self.covariance_at(t - step)) / (2.0 * step)

    def size(self, t: Optional[float] = None) -> int:
        return self.covariance_at(0.5 if self.path is not None and t is None else t).shape[0]


def sample_gaussian_family(
    fam: GaussianFamily, rng, size: Optional[int] = None, t: Optional[float] = None
) -> np.ndarray:
    """Draw one vector (size=None) or `size` rows from the family."""
    rng = as_generator(rng)
    factor = psd_factor(fam.covariance_at(t))
    shape = (factor.rank,) if size is None else (int(size), factor.rank)
    return factor.transform(rng.standard_normal(shape))


def truncate_weights(weights: np.ndarray, tail: float = TAIL_TOLERANCE) -> Tuple[int, float]:
    """
    Smallest count of leading (largest) weights whose discarded tail is below
    `tail` of the total. Returns (count, discarded fraction).
    """
    w = np.sort(np.asarray(weights, dtype=float))[::-1]
    total = float(np.sum(w))
    if not total > 0.0:
        raise InvalidInput("weights must have a positive sum")
    remaining = total - np.cumsum(w)
    count = int(np.searchsorted(-remaining, -tail * total, side="left")) + 1
    count = min(count, w.size)
    return count, float(max(remaining[count - 1], 0.0) / total)


@dataclass(frozen=True)
class WeightedReplicaMeasure:
    """ζ(γ) ∝ ξ_γ e^{−β X_γ} for X drawn from `family` (at `t` if parameterized)."""

    weights: np.ndarray
    beta: float
    family: GaussianFamily
    t: Optional[float] = None
    log_weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w <= 0.0) or not np.all(np.isfinite(w)):
            raise InvalidInput("replica weights must be a nonempty vector of positive finite numbers")
        if self.beta < 0.0:
            raise InvalidInput(f"beta must be >= 0, got {self.beta}")
        if self.family.size(self.t) != w.size:
            raise InvalidInput(f"index mismatch: {w.size} weights for a family of size {self.family.size(self.t)}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "log_weights", np.log(w))

    def zeta(self, x: np.ndarray) -> np.ndarray:
        return softmax(self.log_weights - self.beta * np.asarray(x, dtype=float), axis=-1)


def replica_average(
    measure: WeightedReplicaMeasure,
    f: Callable[..., np.ndarray] | np.ndarray,
    n: int,
    rng,
    samples: int,
) -> Estimate:
    """
    E^{(n)}(f) = E Σ f(γ_1..γ_n) Π ζ(γ_i) for n ∈ {1, 2}.

    `f` is either a table (shape (m,) or (m, m)) or a callable taking index
    arrays and returning the table.
    """
    if n not in (1, 2):
        raise InvalidInput(f"replica count must be 1 or 2, got {n}")
    m = measure.weights.size
    if callable(f):
        idx = np.arange(m)
        table = np.asarray(f(idx) if n == 1 else f(idx[:, None], idx[None, :]), dtype=float)
        table = np.broadcast_to(table, (m,) * n)
    else:
        table = np.asarray(f, dtype=float)
    if table.shape != (m,) * n:
        raise InvalidInput(f"replica function table must have shape {(m,) * n}, got {table.shape}")
    if not np.all(np.isfinite(table)):
        raise NumericalFailure("replica function returned nonfinite values")

    x = sample_gaussian_family(measure.family, rng, size=samples, t=measure.t)
    zeta = measure.zeta(x)
    if n == 1:
        values = zeta @ table
    else:
        values = np.einsum("si,ij,sj->s", zeta, table, zeta)
    return Estimate.from_samples(values)


# ---------------------------------------------------------------------------
# Log-sum-exp test function
# ---------------------------------------------------------------------------


def lse_psi(weights: Sequence[float], beta: float) -> Tuple[Psi, Callable[[np.ndarray], np.ndarray]]:
    """
    ψ(X) = ln Σ ξ_γ e^{−β X_γ} and its Hessian β²(diag ζ − ζ ζᵀ).

    Both callables accept arrays of shape (samples, n).
    """
    log_w = np.log(np.asarray(weights, dtype=float))

    def psi(x):
        return logsumexp(log_w - beta * np.asarray(x, dtype=float), axis=-1)

    def hessian(x):
        zeta = softmax(log_w - beta * np.asarray(x, dtype=float), axis=-1)
        eye = np.eye(zeta.shape[-1])
        return beta * beta * (zeta[..., :, None] * eye - zeta[..., :, None] * zeta[..., None, :])

    return psi, hessian


def numerical_hessian(psi: Psi, x: np.ndarray, step: float = 1e-4) -> np.ndarray:
    """Central second differences of ψ at each row of x."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[1]
    out = np.empty(x.shape + (n,))
    eye = np.eye(n) * step
    for i in range(n):
        for j in range(i, n):
            val = (
                psi(x + eye[i] + eye[j]) - psi(x + eye[i] - eye[j])
                - psi(x - eye[i] + eye[j]) + psi(x - eye[i] - eye[j])
            ) / (4.0 * step * step)
            out[:, i, j] = val
            out[:, j, i] = val
    return out


# ---------------------------------------------------------------------------
# Differentiation identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    lhs: float
    rhs: float
    residual: float
    stderr: float

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "residual": self.residual, "stderr": self.stderr}


def _identity_terms(
    fam: GaussianFamily,
    psi: Psi,
    hessian: Optional[Callable[[np.ndarray], np.ndarray]],
    t: float,
    z: np.ndarray,
    step: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """Per-draw LHS and RHS contributions for standard normals z."""
    if not step > 1e-10:
        raise NumericalFailure(f"finite-difference step {step} underflows")
    center = psd_factor(fam.covariance_at(t))
    plus = psd_factor(fam.covariance_at(t + step), pivot=center.pivot)
    minus = psd_factor(fam.covariance_at(t - step), pivot=center.pivot)
    if not plus.rank == minus.rank == center.rank:
        raise NumericalFailure("covariance rank changes inside the finite-difference stencil; choose an interior t")
    n_draw = z.shape[-1]
    if n_draw != center.rank:
        raise InvalidInput(f"draws have {n_draw} columns, expected {center.rank}")
    lhs = (psi(plus.transform(z)) - psi(minus.transform(z))) / (2.0 * step)
    x = center.transform(z)
    hess = hessian(x) if hessian is not None else numerical_hessian(psi, x)
    cdot = fam.derivative_at(t)
    hess = np.asarray(hess, dtype=float).reshape(x.shape[0], *cdot.shape)
    rhs = 0.5 * np.einsum("ij,sij->s", cdot, hess)
    check_finite(lhs, "test function values")
    check_finite(rhs, "test function second partials")
    return lhs, rhs


def differentiation_identity_residual(
    fam: GaussianFamily,
    psi: Psi,
    t: float,
    rng,
    samples: int,
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    step: float = FD_STEP,
) -> IdentityCheck:
    """
    |d/dt E_t ψ(X) − ½ Σ Ċ_{γγ'} E_t ∂²ψ/∂X_γ∂X_γ'| by Monte Carlo.

    Both sides use the same standard normals; the stderr refers to the
    per-draw difference.
    """
    if not fam.parameterized:
        raise InvalidInput("the differentiation identity needs a covariance path C(t)")
    rng = as_generator(rng)
    rank = psd_factor(fam.covariance_at(t)).rank
    z = rng.standard_normal((int(samples), rank))
    lhs, rhs = _identity_terms(fam, psi, hessian, t, z, step)
    diff = Estimate.from_samples(lhs - rhs)
    return IdentityCheck(
        lhs=float(np.mean(lhs)),
        rhs=float(np.mean(rhs)),
        residual=abs(diff.value),
        stderr=diff.stderr,
    )


def differentiation_identity_quadrature(
    fam: GaussianFamily,
    psi: Psi,
    t: float,
    hessian: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    order: int = 40,
    step: float = FD_STEP,
) -> IdentityCheck:
    """
    Deterministic version of the identity for families of size ≤ 2.

    Tensor Gauss–Hermite quadrature replaces sampling and the t-derivative is
    Richardson-extrapolated from steps h and h/2.
    """
    if not fam.parameterized:
        raise InvalidInput("the differentiation identity needs a covariance path C(t)")
    n = fam.size(t)
    if n > 2:
        raise InvalidInput(f"quadrature oracle supports at most 2 indices, got {n}")
    nodes, weights = gauss_hermite(order)
    rank = psd_factor(fam.covariance_at(t)).rank
    grid = np.array(list(product(nodes, repeat=rank))).reshape(-1, rank)
    w = np.prod(np.array(list(product(weights, repeat=rank))).reshape(-1, rank), axis=1)

    lhs_h, rhs = _identity_terms(fam, psi, hessian, t, grid, step)
    lhs_h2, _ = _identity_terms(fam, psi, hessian, t, grid, step / 2.0)
    lhs = (4.0 * float(w @ lhs_h2) - float(w @ lhs_h)) / 3.0
    rhs_value = float(w @ rhs)
    return IdentityCheck(lhs=lhs, rhs=rhs_value, residual=abs(lhs - rhs_value), stderr=0.0)


# ---------------------------------------------------------------------------
# Interpolation derivative and comparison bound
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class InterpolationTerms:
    single: Estimate
    double: Estimate
    derivative: Estimate

    def to_dict(self) -> dict:
        return {
            "single": self.single.to_dict(),
            "double": self.double.to_dict(),
            "derivative": self.derivative.to_dict(),
        }


def interpolation_derivative(
    weights: Sequence[float],
    beta: float,
    fam: GaussianFamily,
    t: float,
    rng,
    samples: int,
    tail_mass: float = 0.0,
) -> InterpolationTerms:
    """
    The two terms of d/dt E ln Σ ξ e^{−βX}:

        single = β²/2 · E^{(1)}(Ċ_{γγ}),   double = β²/2 · E^{(2)}(Ċ_{γγ'}),

    derivative = single − double, estimated from the same draws. `tail_mass`
    is the fraction of weight dropped when a countable index set was
    truncated to `weights`.
    """
    if tail_mass > TAIL_TOLERANCE:
        logger.warning(
            "weight truncation tail %.3e exceeds tolerance %.1e; derivative bias bounded by beta^2*max|dC|*tail = %.3e",
            tail_mass, TAIL_TOLERANCE,
            beta * beta * float(np.max(np.abs(fam.derivative_at(t)))) * tail_mass,
        )
    measure = WeightedReplicaMeasure(np.asarray(weights, dtype=float), beta, fam, t)
    cdot = fam.derivative_at(t)
    x = sample_gaussian_family(fam, rng, size=samples, t=t)
    zeta = measure.zeta(x)
    coef = 0.5 * beta * beta
    single = coef * (zeta @ np.diag(cdot))
    double = coef * np.einsum("si,ij,sj->s", zeta, cdot, zeta)
    return InterpolationTerms(
        single=Estimate.from_samples(single),
        double=Estimate.from_samples(double),
        derivative=Estimate.from_samples(single - double),
    )


@dataclass(frozen=True)
class ComparisonBound:
    difference: Estimate
    bound: float
    sharpened: bool

    @property
    def holds(self) -> bool:
        return abs(self.difference.value) <= self.bound + 3.0 * self.difference.stderr

    def to_dict(self) -> dict:
        return {
            "difference": abs(self.difference.value),
            "stderr": self.difference.stderr,
            "bound": self.bound,
            "sharpened": self.sharpened,
            "holds": self.holds,
        }


def family_comparison_bound(
    x_fam: GaussianFamily,
    y_fam: GaussianFamily,
    weights: Sequence[float],
    beta: float,
    rng,
    samples: int = 100_000,
) -> ComparisonBound:
    """
    |E ψ(X) − E ψ(Y)| against β² max |Cov X − Cov Y| (β²/2 when every
    variance matches within 1e-12).
    """
    cx = x_fam.covariance_at()
    cy = y_fam.covariance_at()
    if cx.shape != cy.shape:
        raise InvalidInput(f"index mismatch: {cx.shape[0]} vs {cy.shape[0]}")
    psi, _ = lse_psi(weights, beta)
    fx = psd_factor(cx)
    fy = psd_factor(cy)
    rng = as_generator(rng)
    # Common draws: pad the lower-rank factor so both read the same normals.
    rank = max(fx.rank, fy.rank)
    z = rng.standard_normal((int(samples), rank))
    xs = fx.transform(z[:, : fx.rank])
    ys = fy.transform(z[:, : fy.rank])
    diff = Estimate.from_samples(psi(xs) - psi(ys))
    sharpened = bool(np.all(np.abs(np.diag(cx) - np.diag(cy)) <= 1e-12))
    gap = float(np.max(np.abs(cx - cy))) if cx.size else 0.0
    bound = (0.5 if sharpened else 1.0) * beta * beta * gap
    return ComparisonBound(difference=diff, bound=bound, sharpened=sharpened)
