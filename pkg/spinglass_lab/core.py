# spinglass_lab/core.py

from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple
import json
import logging
import math

import numpy as np

from .exceptions import InvalidInput

logger = logging.getLogger(__name__)

# Comparison slack for superadditivity checks, relative to the sequence scale.
_SUPERADDITIVE_RTOL = 1e-12


def as_spin_config(spins: Sequence[int] | np.ndarray) -> np.ndarray:
    """Validate a ±1 spin vector and return it as a read-only int8 array."""
    arr = np.asarray(spins)
    if arr.ndim != 1 or arr.size < 1:
        raise InvalidInput(f"spin configuration must be a nonempty 1-D sequence, got shape {arr.shape}")
    if not np.all((arr == 1) | (arr == -1)):
        bad = arr[(arr != 1) & (arr != -1)][0]
        raise InvalidInput(f"spin values must be +1 or -1, found {bad!r}")
    out = arr.astype(np.int8)
    out.setflags(write=False)
    return out


def overlap(a: Sequence[int] | np.ndarray, b: Sequence[int] | np.ndarray) -> float:
    """q(a, b) = (1/N) Σ a_i b_i."""
    a = as_spin_config(a)
    b = as_spin_config(b)
    if a.size != b.size:
        raise InvalidInput(f"overlap needs equal lengths, got {a.size} and {b.size}")
    return float(np.dot(a.astype(np.int64), b.astype(np.int64))) / a.size


# ---------------------------------------------------------------------------
# Order parameter
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class OrderParameter:
    """
    Piecewise-constant order parameter x(q).

    x(q) = x_i on [q_i, q_{i+1}) with implicit x_0 = 0, q_0 = 0, q_{k+1} = 1
    and x(1) = 1. Levels are strictly increasing in both coordinates. The top
    level may carry x_k = 1 (x is identically one on [q_k, 1)); `annealed`
    is the k = 1, x_1 = 1, q_1 = 0 instance. Use `from_levels` for inputs
    that may contain degenerate levels.
    """

    x: Tuple[float, ...] = ()
    q: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "x", tuple(float(v) for v in self.x))
        object.__setattr__(self, "q", tuple(float(v) for v in self.q))
        if len(self.x) != len(self.q):
            raise InvalidInput(f"x and q must have equal length, got {len(self.x)} and {len(self.q)}")
        for name, values in (("x", self.x), ("q", self.q)):
            if not all(math.isfinite(v) for v in values):
                raise InvalidInput(f"{name} levels must be finite, got {list(values)}")
        for i, (xi, qi) in enumerate(zip(self.x, self.q), start=1):
            if not 0.0 < xi <= 1.0:
                raise InvalidInput(f"x_{i} = {xi} must lie in (0, 1]")
            if not 0.0 <= qi < 1.0:
                raise InvalidInput(f"q_{i} = {qi} must lie in [0, 1)")
        for i in range(1, len(self.x)):
            if not self.x[i - 1] < self.x[i]:
                raise InvalidInput(f"x levels must be strictly increasing, got x_{i}={self.x[i - 1]} >= x_{i + 1}={self.x[i]}")
            if not self.q[i - 1] < self.q[i]:
                raise InvalidInput(f"q levels must be strictly increasing, got q_{i}={self.q[i - 1]} >= q_{i + 1}={self.q[i]}")

    @classmethod
    def annealed(cls) -> "OrderParameter":
        return cls(x=(1.0,), q=(0.0,))

    @classmethod
    def replica_symmetric(cls, q: float) -> "OrderParameter":
        """x ≡ 0 below q and x ≡ 1 above it."""
        return cls(x=(1.0,), q=(float(q),))

    @classmethod
    def from_levels(cls, x: Sequence[float], q: Sequence[float]) -> "OrderParameter":
        """
        Normalization pass for optimizer and refinement output.

        Drops levels whose interval is empty (q_i = q_{i+1}, or q_k = 1),
        drops leading x = 0 levels (they extend the x_0 region) and merges
        consecutive levels with equal x.
        """
        x = [float(v) for v in x]
        q = [float(v) for v in q]
        if len(x) != len(q):
            raise InvalidInput(f"x and q must have equal length, got {len(x)} and {len(q)}")
        for i in range(1, len(q)):
            if q[i] < q[i - 1]:
                raise InvalidInput(f"q levels must be nondecreasing, got {q}")
            if x[i] < x[i - 1]:
                raise InvalidInput(f"x levels must be nondecreasing, got {x}")

        levels: List[Tuple[float, float]] = []
        for i, (xi, qi) in enumerate(zip(x, q)):
            upper = q[i + 1] if i + 1 < len(q) else 1.0
            if qi >= upper:
                continue  # empty interval
            levels.append((xi, qi))

        merged: List[Tuple[float, float]] = []
        for xi, qi in levels:
            if xi <= 0.0 and not merged:
                continue
            if merged and merged[-1][0] == xi:
                continue
            merged.append((xi, qi))
        return cls(x=tuple(v for v, _ in merged), q=tuple(v for _, v in merged))

    @property
    def k(self) -> int:
        return len(self.x)

    @property
    def is_annealed(self) -> bool:
        return self.x == (1.0,) and self.q == (0.0,)

    @property
    def reaches_one(self) -> bool:
        """True when the top level already carries x = 1."""
        return bool(self.x) and self.x[-1] == 1.0

    def boundaries(self) -> Tuple[float, ...]:
        """(q_0, q_1, ..., q_k, q_{k+1}) = (0, ..., 1)."""
        return (0.0,) + self.q + (1.0,)

    def levels(self) -> Tuple[float, ...]:
        """(x_0, x_1, ..., x_k) with x_0 = 0."""
        return (0.0,) + self.x

    def evaluate(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise InvalidInput(f"q = {q} outside [0, 1]")
        if q == 1.0:
            return 1.0
        i = bisect_right(self.q, q)
        return self.x[i - 1] if i > 0 else 0.0

    def q_integral(self) -> float:
        """∫_0^1 q x(q) dq in closed form."""
        upper = self.q[1:] + (1.0,)
        return sum(xi * (hi * hi - lo * lo) / 2.0 for xi, lo, hi in zip(self.x, self.q, upper))

    def phi_integral(self, covariance: "CovarianceSeries") -> float:
        """Σ x_i (φ(q_{i+1}) − φ(q_i)) / 2; reduces to q_integral for f(q) = q²."""
        return order_parameter_phi_integral(self, covariance)

    def to_dict(self) -> Dict[str, List[float]]:
        return {"x": list(self.x), "q": list(self.q)}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "OrderParameter":
        if not isinstance(data, Mapping) or set(data) != {"x", "q"}:
            raise InvalidInput(f"order parameter JSON must be an object with keys 'x' and 'q', got {data!r}")
        return cls(x=tuple(data["x"]), q=tuple(data["q"]))

    @classmethod
    def from_json(cls, text: str) -> "OrderParameter":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidInput(f"Invalid order parameter JSON: {e}")
        return cls.from_dict(data)


def order_parameter_eval(op: OrderParameter, q: float) -> float:
    return op.evaluate(q)


def order_parameter_q_integral(op: OrderParameter) -> float:
    return op.q_integral()


def order_parameter_phi_integral(op: OrderParameter, covariance: "CovarianceSeries") -> float:
    bounds = op.boundaries()
    total = 0.0
    for i, xi in enumerate(op.x, start=1):
        total += xi * (covariance.phi(bounds[i + 1]) - covariance.phi(bounds[i])) / 2.0
    return total


# ---------------------------------------------------------------------------
# Covariance series
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CovarianceSeries:
    """
    f(q) = Σ_r c_r q^r with c_r ≥ 0 and Σ c_r = 1.

    `coefficients` holds (r, c_r) pairs for the nonzero terms, sorted by r.
    """

    coefficients: Tuple[Tuple[int, float], ...] = ((2, 1.0),)
    _powers: np.ndarray = field(init=False, repr=False, compare=False)
    _weights: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if isinstance(self.coefficients, Mapping):
            items = list(self.coefficients.items())
        else:
            items = list(self.coefficients)
        cleaned: Dict[int, float] = {}
        for r, c in items:
            if isinstance(r, bool) or int(r) != r or int(r) < 1:
                raise InvalidInput(f"covariance powers must be integers >= 1, got {r!r}")
            c = float(c)
            if not math.isfinite(c) or c < 0.0:
                raise InvalidInput(f"covariance coefficient for power {r} must be finite and >= 0, got {c}")
            if int(r) in cleaned:
                raise InvalidInput(f"duplicate covariance power {r}")
            if c > 0.0:
                cleaned[int(r)] = c
        if not cleaned:
            raise InvalidInput("covariance series needs at least one positive coefficient")
        total = sum(cleaned.values())
        if abs(total - 1.0) > 1e-9:
            raise InvalidInput(f"covariance coefficients must sum to 1, got {total}")
        pairs = tuple(sorted(cleaned.items()))
        object.__setattr__(self, "coefficients", pairs)
        object.__setattr__(self, "_powers", np.array([r for r, _ in pairs], dtype=float))
        object.__setattr__(self, "_weights", np.array([c for _, c in pairs], dtype=float))

    @classmethod
    def sk(cls) -> "CovarianceSeries":
        return cls(((2, 1.0),))

    @classmethod
    def p_spin(cls, p: int) -> "CovarianceSeries":
        return cls(((int(p), 1.0),))

    @classmethod
    def from_weights(cls, weights: Mapping[int, float]) -> "CovarianceSeries":
        """Build from unnormalized nonnegative weights."""
        total = sum(float(v) for v in weights.values())
        if not total > 0.0:
            raise InvalidInput(f"covariance weights must have a positive sum, got {dict(weights)}")
        return cls(tuple((int(r), float(v) / total) for r, v in weights.items()))

    @property
    def is_sk(self) -> bool:
        return self.coefficients == ((2, 1.0),)

    def _check_range(self, q) -> np.ndarray:
        arr = np.asarray(q, dtype=float)
        if np.any(np.abs(arr) > 1.0) or not np.all(np.isfinite(arr)):
            raise InvalidInput(f"covariance argument must lie in [-1, 1], got {q}")
        return arr

    def f(self, q):
        arr = self._check_range(q)
        out = np.sum(self._weights * np.power.outer(arr, self._powers), axis=-1)
        return out if out.ndim else float(out)

    def fprime(self, q):
        arr = self._check_range(q)
        out = np.sum(self._weights * self._powers * np.power.outer(arr, self._powers - 1.0), axis=-1)
        return out if out.ndim else float(out)

    def fsecond(self, q):
        arr = self._check_range(q)
        w = self._weights * self._powers * (self._powers - 1.0)
        out = np.sum(w * np.power.outer(arr, np.maximum(self._powers - 2.0, 0.0)), axis=-1)
        return out if out.ndim else float(out)

    def phi(self, q):
        """φ(q) = q f'(q) − f(q) = Σ (r − 1) c_r q^r."""
        arr = self._check_range(q)
        out = np.sum(self._weights * (self._powers - 1.0) * np.power.outer(arr, self._powers), axis=-1)
        return out if out.ndim else float(out)

    def evaluate(self, q: float) -> Tuple[float, float, float]:
        return self.f(q), self.fprime(q), self.phi(q)

    def variance_profile(self, q):
        """Cavity field covariance f'(q)/2 (equals q for SK)."""
        out = np.asarray(self.fprime(q)) / 2.0
        return out if out.ndim else float(out)

    def kappa_profile(self, q):
        """Fugacity field covariance φ(q)/2 (equals q²/2 for SK)."""
        out = np.asarray(self.phi(q)) / 2.0
        return out if out.ndim else float(out)

    def is_convex(self, grid_points: int = 2001) -> bool:
        if all(r % 2 == 0 for r, _ in self.coefficients):
            return True
        grid = np.linspace(-1.0, 1.0, grid_points)
        return bool(np.all(self.fsecond(grid) >= -1e-12))

    def to_dict(self) -> Dict[str, Dict[str, float]]:
        return {"coeffs": {str(r): c for r, c in self.coefficients}}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "CovarianceSeries":
        if not isinstance(data, Mapping) or set(data) != {"coeffs"} or not isinstance(data["coeffs"], Mapping):
            raise InvalidInput(f"covariance JSON must look like {{\"coeffs\": {{\"2\": 1.0}}}}, got {data!r}")
        try:
            pairs = tuple((int(r), float(c)) for r, c in data["coeffs"].items())
        except (TypeError, ValueError) as e:
            raise InvalidInput(f"Invalid covariance coefficients: {e}")
        return cls(pairs)

    @classmethod
    def from_json(cls, text: str) -> "CovarianceSeries":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as e:
            raise InvalidInput(f"Invalid covariance JSON: {e}")
        return cls.from_dict(data)


def covariance_eval(f: CovarianceSeries, q: float) -> Tuple[float, float, float]:
    return f.evaluate(q)


# ---------------------------------------------------------------------------
# Superadditive limits
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SuperadditiveReport:
    window: int
    ratios: Tuple[float, ...]
    running_sup: Tuple[float, ...]
    incremental: Tuple[Tuple[int, float], ...]
    violations: Tuple[Tuple[int, int], ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def sup_estimate(self) -> float:
        return self.running_sup[-1]

    @property
    def incremental_estimate(self) -> Optional[float]:
        return self.incremental[-1][1] if self.incremental else None

    def to_dict(self) -> dict:
        return {
            "window": self.window,
            "ratios": list(self.ratios),
            "running_sup": list(self.running_sup),
            "incremental": [[n, v] for n, v in self.incremental],
            "violations": [list(p) for p in self.violations],
            "ok": self.ok,
        }


def superadditive_limit_check(sequence: Sequence[float], window: int) -> SuperadditiveReport:
    """
    Check Q_N + Q_M ≤ Q_{N+M} on a finite truncation and report both limit estimates.

    `sequence[N - 1]` holds Q_N. The report carries Q_N/N, its running sup,
    the incremental estimates (Q_{N+window} − Q_N)/window and every
    offending pair (N, M) with N ≤ M.
    """
    values = [float(v) for v in sequence]
    if not values:
        raise InvalidInput("superadditive check needs a nonempty sequence")
    if not all(math.isfinite(v) for v in values):
        raise InvalidInput("superadditive check needs finite values")
    if isinstance(window, bool) or int(window) != window or window < 1:
        raise InvalidInput(f"window must be a positive integer, got {window!r}")
    window = int(window)
    length = len(values)

    ratios = tuple(v / n for n, v in enumerate(values, start=1))
    running_sup = tuple(np.maximum.accumulate(ratios).tolist())
    incremental = tuple(
        (n, (values[n + window - 1] - values[n - 1]) / window) for n in range(1, length - window + 1)
    )

    scale = max(1.0, max(abs(v) for v in values))
    violations = []
    for n in range(1, length + 1):
        for m in range(n, length - n + 1):
            if values[n - 1] + values[m - 1] > values[n + m - 1] + _SUPERADDITIVE_RTOL * scale:
                violations.append((n, m))
    if violations:
        logger.warning(
            "superadditivity violated at %d pair(s); first offending pair N=%d, M=%d",
            len(violations), *violations[0],
        )
    return SuperadditiveReport(
        window=window,
        ratios=ratios,
        running_sup=running_sup,
        incremental=incremental,
        violations=tuple(violations),
    )
