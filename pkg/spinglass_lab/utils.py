from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Iterable, List, Sequence, Tuple, TypeVar
import logging
import math
import os

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy.special import roots_legendre

from .exceptions import InvalidInput, NumericalFailure

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

LN2 = math.log(2.0)
UINT64_MAX = 2**64 - 1


@dataclass(frozen=True)
class SeedSpec:
    """
    Root of every random stream in the lab.

    A task key (a tuple of nonnegative integers, e.g. (disorder_index,) or
    (trial, level, node)) is mapped to an independent Philox stream through
    SeedSequence spawn keys, so the stream depends only on (root_seed, key)
    and never on scheduling.
    """

    root_seed: int = 0

    def __post_init__(self):
        if not isinstance(self.root_seed, (int, np.integer)) or isinstance(self.root_seed, bool):
            raise InvalidInput(f"seed must be an integer, got {self.root_seed!r}")
        if not 0 <= int(self.root_seed) <= UINT64_MAX:
            raise InvalidInput(f"seed must fit in 64 bits, got {self.root_seed}")

    def sequence(self, *task: int) -> np.random.SeedSequence:
        for part in task:
            if int(part) < 0:
                raise InvalidInput(f"task key entries must be nonnegative, got {task}")
        return np.random.SeedSequence(int(self.root_seed), spawn_key=tuple(int(p) for p in task))

    def generator(self, *task: int) -> np.random.Generator:
        return np.random.Generator(np.random.Philox(self.sequence(*task)))

    def child(self, *task: int) -> "SeedSpec":
        """Derive a new root seed for a sub-experiment keyed by `task`."""
        state = self.sequence(*task).generate_state(2, dtype=np.uint32)
        return SeedSpec(int(state[0]) | (int(state[1]) << 32))


def as_generator(rng: Any) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, SeedSpec):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return SeedSpec(int(rng)).generator()
    raise InvalidInput(f"expected a numpy Generator, SeedSpec or integer seed, got {type(rng).__name__}")


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)


def parallel_map(fn: Callable[[T], R], items: Iterable[T], threads: int = 1) -> List[R]:
    """
    Map `fn` over `items` on a thread pool.

    Results always come back in task-index order, so any fold over them is
    deterministic regardless of the pool size.
    """
    items = list(items)
    if threads is None or threads <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=min(threads, len(items))) as pool:
        return list(pool.map(fn, items))


@dataclass(frozen=True)
class Estimate:
    value: float
    stderr: float
    samples: int

    @classmethod
    def from_samples(cls, values: Sequence[float] | np.ndarray) -> "Estimate":
        arr = np.asarray(values, dtype=float).ravel()
        if arr.size == 0:
            raise InvalidInput("cannot form an estimate from zero samples")
        if not np.all(np.isfinite(arr)):
            raise NumericalFailure("nonfinite sample encountered while averaging")
        # Constant ensembles are reported exactly.
        if np.all(arr == arr[0]):
            return cls(float(arr[0]), 0.0, int(arr.size))
        stderr = float(np.std(arr, ddof=1) / math.sqrt(arr.size)) if arr.size > 1 else 0.0
        return cls(float(np.mean(arr)), stderr, int(arr.size))

    def within(self, target: float, sigmas: float = 3.0, slack: float = 0.0) -> bool:
        return abs(self.value - target) <= sigmas * self.stderr + slack

    def to_dict(self) -> dict:
        return {"value": self.value, "stderr": self.stderr, "samples": self.samples}


def difference(a: Estimate, b: Estimate) -> Estimate:
    """a − b for independent estimates."""
    return Estimate(a.value - b.value, math.hypot(a.stderr, b.stderr), min(a.samples, b.samples))


def log_cosh(u: np.ndarray | float) -> np.ndarray | float:
    """Overflow-free ln cosh(u)."""
    u = np.asarray(u, dtype=float)
    out = np.logaddexp(u, -u) - LN2
    return out if out.ndim else float(out)


@lru_cache(maxsize=64)
def gauss_hermite(order: int) -> Tuple[np.ndarray, np.ndarray]:
    """
    Nodes and weights for E f(Z), Z ~ N(0,1).

    Weights sum to one. Cached per order; callers must not mutate the arrays.
    """
    if order < 1:
        raise InvalidInput(f"quadrature order must be positive, got {order}")
    nodes, weights = hermegauss(order)
    weights = weights / math.sqrt(2.0 * math.pi)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=64)
def gauss_legendre(order: int, a: float = 0.0, b: float = 1.0) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights for ∫_a^b f(t) dt."""
    if order < 1:
        raise InvalidInput(f"quadrature order must be positive, got {order}")
    nodes, weights = roots_legendre(order)
    half = 0.5 * (b - a)
    nodes = a + half * (nodes + 1.0)
    weights = half * weights
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def check_finite(values: np.ndarray | float, what: str) -> None:
    if not np.all(np.isfinite(values)):
        raise NumericalFailure(f"nonfinite values in {what}")
