"""Lipschitz-constant estimation, Set Membership bounds and the incremental cone cache.

Every bound is an intersection of cones anchored at samples: the lower bound is
max_k (z_k - mu*gamma*|x - x_k|), the upper bound min_k (z_k + mu*gamma*|x - x_k|).
Caches keep the cone that generated each bound (tip value, depth, sample index)
rather than the scalar, so a growing gamma only needs the depths rescaled.
"""
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.spatial.distance import cdist, pdist

from smgo.config import settings
from smgo.lib.core import History, Sample
from smgo.lib.errors import EmptyHistory, ZeroDistance


@dataclass(frozen=True)
class ConeRecord:
    tip_value: float
    depth: float
    generator_index: int


@dataclass(frozen=True, eq=False)
class CachedBound:
    location: np.ndarray
    lower: ConeRecord
    upper: Optional[ConeRecord] = None

    @property
    def lower_value(self) -> float:
        return self.lower.tip_value - self.lower.depth

    @property
    def upper_value(self) -> Optional[float]:
        if self.upper is None:
            return None
        return self.upper.tip_value + self.upper.depth

    @property
    def uncertainty(self) -> Optional[float]:
        if self.upper is None:
            return None
        return self.upper_value - self.lower_value


def init_gamma(samples: Sequence[Sample], gamma_seed: Optional[float] = None) -> float:
    """Largest pairwise slope among the initial samples; gamma_seed for a single sample."""
    if len(samples) < 2:
        return settings.gamma_seed if gamma_seed is None else gamma_seed
    X = np.vstack([s.x for s in samples])
    Z = np.array([s.z for s in samples])
    dist = pdist(X)
    if np.any(dist == 0):
        raise ZeroDistance("Two initial samples share a location")
    dz = pdist(Z[:, None], metric="cityblock")
    return float(np.max(dz / dist))


def update_gamma(gamma_prev: float, history: History, new_sample: Sample) -> float:
    """max(gamma_prev, steepest slope between `new_sample` and the stored samples)."""
    if history.n == 0:
        return gamma_prev
    dist = np.linalg.norm(history.X - new_sample.x, axis=1)
    if np.any(dist < history.eps_dup) or np.any(dist == 0):
        raise ZeroDistance(f"New sample {new_sample.x} coincides with a stored one")
    slopes = np.abs(history.Z - new_sample.z) / dist
    return max(float(gamma_prev), float(np.max(slopes)))


def _distances(points: np.ndarray, X: np.ndarray) -> np.ndarray:
    return cdist(np.atleast_2d(points), X)


def lower_bounds(points: np.ndarray, X: np.ndarray, Z: np.ndarray, mu_gamma: float) -> np.ndarray:
    return np.max(Z[None, :] - mu_gamma * _distances(points, X), axis=1)


def upper_bounds(points: np.ndarray, X: np.ndarray, Z: np.ndarray, mu_gamma: float) -> np.ndarray:
    return np.min(Z[None, :] + mu_gamma * _distances(points, X), axis=1)


def _require_samples(history: History) -> None:
    if history.n == 0:
        raise EmptyHistory("Bounds need at least one sample")


def lower_bound(x: np.ndarray, history: History, mu: float) -> float:
    _require_samples(history)
    return float(lower_bounds(np.asarray(x, dtype=float), history.X, history.Z, mu * history.gamma)[0])


def upper_bound(x: np.ndarray, history: History, mu: float) -> float:
    _require_samples(history)
    return float(upper_bounds(np.asarray(x, dtype=float), history.X, history.Z, mu * history.gamma)[0])


def uncertainty(x: np.ndarray, history: History, mu: float) -> float:
    return upper_bound(x, history, mu) - lower_bound(x, history, mu)


def cone_records(
    points: np.ndarray,
    X: np.ndarray,
    Z: np.ndarray,
    mu_gamma: float,
) -> Tuple[Tuple[np.ndarray, np.ndarray, np.ndarray], Tuple[np.ndarray, np.ndarray, np.ndarray]]:
    """Generating cones of the lower and upper bound at each point, by full O(n) scan.

    Returns ((tip, depth, index) for the lower bound, (tip, depth, index) for the upper).
    """
    depth = mu_gamma * _distances(points, X)
    rows = np.arange(depth.shape[0])
    lo_gen = np.argmax(Z[None, :] - depth, axis=1)
    up_gen = np.argmin(Z[None, :] + depth, axis=1)
    return (
        (Z[lo_gen].copy(), depth[rows, lo_gen], lo_gen),
        (Z[up_gen].copy(), depth[rows, up_gen], up_gen),
    )


def absorb_sample(
    locations: np.ndarray,
    lower: Tuple[np.ndarray, np.ndarray, np.ndarray],
    upper: Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]],
    x_new: np.ndarray,
    z_new: float,
    index: int,
    mu_gamma: float,
) -> None:
    """In place: swap in the new sample's cone wherever it tightens a bound."""
    depth = mu_gamma * np.linalg.norm(locations - x_new, axis=1)
    lo_tip, lo_depth, lo_gen = lower
    tighter = (z_new - depth) > (lo_tip - lo_depth)
    lo_tip[tighter] = z_new
    lo_depth[tighter] = depth[tighter]
    lo_gen[tighter] = index
    if upper is not None:
        up_tip, up_depth, up_gen = upper
        tighter = (z_new + depth) < (up_tip + up_depth)
        up_tip[tighter] = z_new
        up_depth[tighter] = depth[tighter]
        up_gen[tighter] = index


def cache_update_new_sample(
    cache: CachedBound,
    new_sample: Sample,
    gamma: float,
    mu: float,
    index: int = -1,
) -> CachedBound:
    loc = cache.location[None, :]
    lower = tuple(np.array([v]) for v in (cache.lower.tip_value, cache.lower.depth, cache.lower.generator_index))
    upper = None
    if cache.upper is not None:
        upper = tuple(np.array([v]) for v in (cache.upper.tip_value, cache.upper.depth, cache.upper.generator_index))
    absorb_sample(loc, lower, upper, new_sample.x, new_sample.z, index, mu * gamma)

    def _record(arrays) -> ConeRecord:
        return ConeRecord(float(arrays[0][0]), float(arrays[1][0]), int(arrays[2][0]))

    return replace(cache, lower=_record(lower), upper=None if upper is None else _record(upper))


def cache_rescale_gamma(cache: CachedBound, gamma_old: float, gamma_new: float) -> CachedBound:
    ratio = gamma_new / gamma_old
    if ratio == 1.0:
        return cache
    return replace(
        cache,
        lower=replace(cache.lower, depth=cache.lower.depth * ratio),
        upper=None if cache.upper is None else replace(cache.upper, depth=cache.upper.depth * ratio),
    )


class BoundCache:
    """Column store of CachedBound records with a key per row.

    `gamma` is the Lipschitz estimate the stored depths are scaled with.
    """

    def __init__(self, dim: int, key_width: int = 2, with_upper: bool = True, capacity: int = 256):
        self.dim = dim
        self.with_upper = with_upper
        self.size = 0
        self.gamma = 0.0
        self._loc = np.empty((capacity, dim))
        self._keys = np.empty((capacity, key_width), dtype=np.int64)
        self._lo = [np.empty(capacity), np.empty(capacity), np.empty(capacity, dtype=np.int64)]
        self._up = [np.empty(capacity), np.empty(capacity), np.empty(capacity, dtype=np.int64)] if with_upper else None

    def __len__(self) -> int:
        return self.size

    def clear(self) -> None:
        self.size = 0

    @property
    def locations(self) -> np.ndarray:
        return self._loc[: self.size]

    @property
    def keys(self) -> np.ndarray:
        return self._keys[: self.size]

    def _view(self, arrays):
        return tuple(a[: self.size] for a in arrays)

    @property
    def lower(self) -> np.ndarray:
        tip, depth, _ = self._view(self._lo)
        return tip - depth

    @property
    def upper(self) -> np.ndarray:
        if self._up is None:
            raise AttributeError("Cache was created without upper-bound cones")
        tip, depth, _ = self._view(self._up)
        return tip + depth

    @property
    def uncertainty(self) -> np.ndarray:
        return self.upper - self.lower

    def _reserve(self, extra: int) -> None:
        need = self.size + extra
        cap = self._loc.shape[0]
        if need <= cap:
            return
        while cap < need:
            cap *= 2

        def grown(a):
            b = np.empty((cap,) + a.shape[1:], dtype=a.dtype)
            b[: self.size] = a[: self.size]
            return b

        self._loc = grown(self._loc)
        self._keys = grown(self._keys)
        self._lo = [grown(a) for a in self._lo]
        if self._up is not None:
            self._up = [grown(a) for a in self._up]

    def append(self, locations: np.ndarray, keys: np.ndarray, history: History, mu: float) -> None:
        """Insert new entries, evaluating their bounds from scratch against `history`."""
        locations = np.atleast_2d(locations)
        m = locations.shape[0]
        if m == 0:
            return
        if self.size == 0:
            self.gamma = history.gamma
        lower, upper = cone_records(locations, history.X, history.Z, mu * self.gamma)
        self._reserve(m)
        sl = slice(self.size, self.size + m)
        self._loc[sl] = locations
        self._keys[sl] = np.asarray(keys).reshape(m, -1)
        for dst, src in zip(self._lo, lower):
            dst[sl] = src
        if self._up is not None:
            for dst, src in zip(self._up, upper):
                dst[sl] = src
        self.size += m

    def rescale(self, gamma_new: float) -> None:
        if self.size and self.gamma > 0 and gamma_new != self.gamma:
            ratio = gamma_new / self.gamma
            self._lo[1][: self.size] *= ratio
            if self._up is not None:
                self._up[1][: self.size] *= ratio
        self.gamma = gamma_new

    def absorb(self, sample: Sample, index: int, mu: float) -> None:
        if self.size == 0:
            return
        upper = self._view(self._up) if self._up is not None else None
        absorb_sample(self.locations, self._view(self._lo), upper, sample.x, sample.z, index, mu * self.gamma)
