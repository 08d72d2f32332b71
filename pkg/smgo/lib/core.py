"""Samples, the search box and the evaluation history shared by every other module."""
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from smgo.config import settings
from smgo.lib.errors import (
    DimensionTooLarge,
    DuplicatePoint,
    EmptyHistory,
    NonFiniteValue,
    OutOfBounds,
)
from smgo.util.numeric import lex_less


@dataclass(frozen=True, eq=False)
class Sample:
    x: np.ndarray
    z: float

    def __post_init__(self):
        x = np.array(self.x, dtype=float).reshape(-1)
        if x.size == 0:
            raise ValueError("Sample needs at least one decision variable")
        if not np.all(np.isfinite(x)):
            raise NonFiniteValue(f"Non-finite decision vector {x}")
        if not np.isfinite(self.z):
            raise NonFiniteValue(f"Non-finite cost value {self.z!r}")
        x.setflags(write=False)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "z", float(self.z))


def _vertices_from_codes(lower: np.ndarray, upper: np.ndarray, codes: np.ndarray) -> np.ndarray:
    # dimension 0 is the most significant bit
    dim = lower.size
    shifts = np.arange(dim - 1, -1, -1, dtype=np.int64)
    bits = (np.asarray(codes, dtype=np.int64)[:, None] >> shifts) & 1
    return np.where(bits == 1, upper, lower)


@dataclass(eq=False)
class SearchSpace:
    """Axis-aligned box lower <= x <= upper."""
    lower: np.ndarray
    upper: np.ndarray
    _vertices: Optional[np.ndarray] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        self.lower = np.array(self.lower, dtype=float).reshape(-1)
        self.upper = np.array(self.upper, dtype=float).reshape(-1)
        if self.lower.size == 0 or self.lower.shape != self.upper.shape:
            raise ValueError(f"Bounds must be non-empty vectors of equal length, got {self.lower} / {self.upper}")
        if not np.all(self.lower < self.upper):
            raise ValueError(f"Every lower bound must be below its upper bound: {self.lower} / {self.upper}")

    @classmethod
    def cube(cls, low: float, high: float, dim: int) -> "SearchSpace":
        return cls(np.full(dim, low, dtype=float), np.full(dim, high, dtype=float))

    @property
    def dim(self) -> int:
        return int(self.lower.size)

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def eps_dup(self) -> float:
        return settings.eps_dup_rel * self.diameter

    @property
    def vertices(self) -> np.ndarray:
        if self._vertices is None:
            self._vertices = enumerate_vertices(self)
        return self._vertices

    def contains(self, x: np.ndarray) -> bool:
        x = np.asarray(x, dtype=float)
        return x.shape == self.lower.shape and bool(np.all(x >= self.lower) and np.all(x <= self.upper))

    def clip(self, x: np.ndarray) -> np.ndarray:
        return np.clip(x, self.lower, self.upper)

    def uniform(self, rng: np.random.Generator, size: Optional[int] = None) -> np.ndarray:
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)

    def sample_vertices(self, count: int, seed: int) -> np.ndarray:
        """A fixed random subset of `count` corners, returned in binary counting order."""
        total = 2 ** self.dim
        if count >= total:
            return _vertices_from_codes(self.lower, self.upper, np.arange(total))
        rng = np.random.default_rng(seed)
        codes = np.sort(rng.choice(total, size=count, replace=False))
        return _vertices_from_codes(self.lower, self.upper, codes)


def enumerate_vertices(space: SearchSpace, cap: Optional[int] = None) -> np.ndarray:
    """All 2^D corners of the box, in binary counting order over dimensions."""
    cap = settings.vertex_cap if cap is None else cap
    if space.dim > cap:
        raise DimensionTooLarge(f"Refusing to enumerate 2^{space.dim} vertices (cap is D={cap})")
    return _vertices_from_codes(space.lower, space.upper, np.arange(2 ** space.dim))


class History:
    """Ordered sample set with the best-pair index and the current Lipschitz estimate.

    Single writer: mutate from one thread only.
    """

    def __init__(self, space: SearchSpace, eps_dup: Optional[float] = None, capacity: int = 64):
        self.space = space
        self.eps_dup = space.eps_dup if eps_dup is None else float(eps_dup)
        self._X = np.empty((capacity, space.dim))
        self._Z = np.empty(capacity)
        self.n = 0
        self.best_index = -1
        self.gamma = 0.0
        self.n0 = 0

    @classmethod
    def from_samples(cls, space: SearchSpace, samples: Sequence[Sample], **kwargs) -> "History":
        history = cls(space, capacity=max(64, 2 * len(samples)), **kwargs)
        for s in samples:
            add_sample(history, s)
        return history

    def __len__(self) -> int:
        return self.n

    @property
    def X(self) -> np.ndarray:
        return self._X[: self.n]

    @property
    def Z(self) -> np.ndarray:
        return self._Z[: self.n]

    def nearest_distance(self, x: np.ndarray) -> float:
        if self.n == 0:
            return float("inf")
        return float(np.min(np.linalg.norm(self.X - x, axis=1)))

    def validate(self, s: Sample) -> None:
        """Raise if `s` cannot be appended; never mutates."""
        if s.x.size != self.space.dim:
            raise OutOfBounds(f"Expected {self.space.dim} components, got {s.x.size}")
        if not self.space.contains(s.x):
            raise OutOfBounds(f"Point {s.x} outside [{self.space.lower}, {self.space.upper}]")
        dist = self.nearest_distance(s.x)
        if dist < self.eps_dup:
            raise DuplicatePoint(f"Point {s.x} is {dist:.3e} from an existing sample (eps_dup={self.eps_dup:.3e})")

    def _grow(self) -> None:
        cap = 2 * self._X.shape[0]
        X = np.empty((cap, self.space.dim))
        Z = np.empty(cap)
        X[: self.n] = self.X
        Z[: self.n] = self.Z
        self._X, self._Z = X, Z


def add_sample(history: History, s: Sample) -> History:
    """Append `s` and update the best index; gamma is left to the bounds module."""
    history.validate(s)
    if history.n == history._X.shape[0]:
        history._grow()
    i = history.n
    history._X[i] = s.x
    history._Z[i] = s.z
    history.n += 1
    if history.best_index < 0:
        history.best_index = i
    else:
        z_best = history._Z[history.best_index]
        if s.z < z_best or (s.z == z_best and lex_less(s.x, history._X[history.best_index])):
            history.best_index = i
    return history


def best(history: History) -> Tuple[np.ndarray, float]:
    if history.n == 0:
        raise EmptyHistory("No samples yet")
    i = history.best_index
    return history._X[i].copy(), float(history._Z[i])
