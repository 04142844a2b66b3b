# spinglass_lab/laws.py

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Callable, Dict, Tuple
import math

import numpy as np
from scipy import stats

from .exceptions import InvalidInput
from .utils import log_cosh


# ---------------------------------------------------------------------------
# Positive multiplicative increment laws
# ---------------------------------------------------------------------------


class IncrementLaw(ABC):
    """A positive law g with closed-form ⟨γ^x⟩ and closed-form tilt γ^x g(dγ)/⟨γ^x⟩."""

    discrete: bool = False

    @abstractmethod
    def sample(self, rng: np.random.Generator, size) -> np.ndarray: ...

    @abstractmethod
    def moment(self, x: float) -> float:
        """⟨γ^x⟩."""

    @abstractmethod
    def tilted(self, x: float) -> "IncrementLaw": ...

    @abstractmethod
    def cdf(self, v) -> np.ndarray: ...

    def correction(self, x: float) -> float:
        """K = ⟨γ^x⟩^{1/x}."""
        return self.moment(x) ** (1.0 / x)


@dataclass(frozen=True)
class PointMass(IncrementLaw):
    c: float = 1.0
    discrete = True

    def __post_init__(self):
        if not (math.isfinite(self.c) and self.c > 0.0):
            raise InvalidInput(f"point mass location must be positive, got {self.c}")

    def sample(self, rng, size):
        return np.full(size, self.c, dtype=float)

    def moment(self, x):
        return self.c ** x

    def tilted(self, x):
        return self

    def cdf(self, v):
        return (np.asarray(v, dtype=float) >= self.c).astype(float)

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array([self.c]), np.array([1.0])


@dataclass(frozen=True)
class LogNormal(IncrementLaw):
    """γ = exp(mu + s Z)."""

    s: float = 0.5
    mu: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.s) and self.s > 0.0 and math.isfinite(self.mu)):
            raise InvalidInput(f"lognormal needs s > 0 and finite mu, got s={self.s}, mu={self.mu}")

    def _dist(self):
        return stats.lognorm(self.s, scale=math.exp(self.mu))

    def sample(self, rng, size):
        return np.exp(self.mu + self.s * rng.standard_normal(size))

    def moment(self, x):
        return math.exp(x * self.mu + 0.5 * x * x * self.s * self.s)

    def tilted(self, x):
        # Exponential tilting of a Gaussian shifts its mean by x s².
        return LogNormal(self.s, self.mu + x * self.s * self.s)

    def cdf(self, v):
        return self._dist().cdf(np.asarray(v, dtype=float))


@dataclass(frozen=True)
class TwoPoint(IncrementLaw):
    """P(γ = a) = p, P(γ = b) = 1 − p."""

    a: float = 1.0
    b: float = 2.0
    p: float = 0.5
    discrete = True

    def __post_init__(self):
        if not (self.a > 0.0 and self.b > 0.0 and math.isfinite(self.a) and math.isfinite(self.b)):
            raise InvalidInput(f"two-point support must be positive, got a={self.a}, b={self.b}")
        if self.a == self.b:
            raise InvalidInput("two-point support must contain two distinct values; use a point mass")
        if not 0.0 < self.p < 1.0:
            raise InvalidInput(f"two-point weight p must lie in (0, 1), got {self.p}")

    def sample(self, rng, size):
        return np.where(rng.random(size) < self.p, self.a, self.b)

    def moment(self, x):
        return self.p * self.a ** x + (1.0 - self.p) * self.b ** x

    def tilted(self, x):
        return TwoPoint(self.a, self.b, self.p * self.a ** x / self.moment(x))

    def cdf(self, v):
        v = np.asarray(v, dtype=float)
        lo, hi = sorted((self.a, self.b))
        p_lo = self.p if lo == self.a else 1.0 - self.p
        return np.where(v >= hi, 1.0, np.where(v >= lo, p_lo, 0.0))

    def support(self) -> Tuple[np.ndarray, np.ndarray]:
        return np.array([self.a, self.b]), np.array([self.p, 1.0 - self.p])


INCREMENT_LAWS: Dict[str, Callable[..., IncrementLaw]] = {
    "point": PointMass,
    "lognormal": LogNormal,
    "two-point": TwoPoint,
}


def get_increment_law(spec: str) -> IncrementLaw:
    """
    Parse a law from its command-line form.

    Supports:
    - "point:2"
    - "lognormal:0.5" or "lognormal:0.5,0.1" (s, mu)
    - "two-point:1,2" or "two-point:1,2,0.3" (a, b, p)
    """
    name, _, raw = spec.partition(":")
    name = name.strip().lower()
    if name not in INCREMENT_LAWS:
        raise InvalidInput(f"Unknown increment law '{name}'. Use one of: {', '.join(INCREMENT_LAWS)}")
    try:
        args = [float(part) for part in raw.split(",") if part.strip()]
    except ValueError:
        raise InvalidInput(f"Invalid parameters for increment law '{spec}'")
    try:
        return INCREMENT_LAWS[name](*args)
    except TypeError:
        raise InvalidInput(f"Wrong number of parameters for increment law '{spec}'")


# ---------------------------------------------------------------------------
# Lipschitz reweighting functions
# ---------------------------------------------------------------------------


class PsiFunction(ABC):
    """A Lipschitz function ψ(y) with a declared Lipschitz bound."""

    lipschitz: float

    @abstractmethod
    def __call__(self, y): ...

    def check_lipschitz(self, span: float = 20.0, points: int = 4001) -> float:
        """Largest finite-difference slope on [−span, span]; raises when it exceeds the declared bound."""
        grid = np.linspace(-span, span, points)
        values = np.asarray(self(grid), dtype=float)
        slope = float(np.max(np.abs(np.diff(values) / np.diff(grid))))
        if not math.isfinite(slope) or slope > self.lipschitz * (1.0 + 1e-9) + 1e-12:
            raise InvalidInput(
                f"{type(self).__name__} is not {self.lipschitz}-Lipschitz: observed slope {slope}"
            )
        return slope


@dataclass(frozen=True)
class LnCosh(PsiFunction):
    beta: float = 1.0
    h: float = 0.0

    @property
    def lipschitz(self) -> float:
        return abs(self.beta)

    def __call__(self, y):
        return log_cosh(self.beta * (np.asarray(y, dtype=float) + self.h))


@dataclass(frozen=True)
class Linear(PsiFunction):
    slope: float = 0.3
    intercept: float = 0.0

    @property
    def lipschitz(self) -> float:
        return abs(self.slope)

    def __call__(self, y):
        return self.intercept + self.slope * np.asarray(y, dtype=float)


@dataclass(frozen=True)
class Sigmoid(PsiFunction):
    """amplitude / (1 + e^{−scale·y})."""

    amplitude: float = 1.0
    scale: float = 1.0

    @property
    def lipschitz(self) -> float:
        return abs(self.amplitude * self.scale) / 4.0

    def __call__(self, y):
        return self.amplitude * stats.logistic.cdf(self.scale * np.asarray(y, dtype=float))


@dataclass(frozen=True)
class Constant(PsiFunction):
    value: float = 0.0
    lipschitz: float = 0.0

    def __call__(self, y):
        return np.full(np.shape(y), self.value, dtype=float)


PSI_FUNCTIONS: Dict[str, Callable[..., PsiFunction]] = {
    "lncosh": LnCosh,
    "linear": Linear,
    "sigmoid": Sigmoid,
    "constant": Constant,
}


def get_psi_function(spec: str) -> PsiFunction:
    """Parse "lncosh:1,0", "linear:0.3", "sigmoid:1,2" or "constant:0"."""
    name, _, raw = spec.partition(":")
    name = name.strip().lower()
    if name not in PSI_FUNCTIONS:
        raise InvalidInput(f"Unknown psi function '{name}'. Use one of: {', '.join(PSI_FUNCTIONS)}")
    try:
        args = [float(part) for part in raw.split(",") if part.strip()]
        return PSI_FUNCTIONS[name](*args)
    except (TypeError, ValueError):
        raise InvalidInput(f"Invalid parameters for psi function '{spec}'")
