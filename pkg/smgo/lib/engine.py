"""Ask/tell SMGO driver: exploitation along segments from the best sample (Mode theta),
exploration of segment midpoints with the widest uncertainty (Mode psi), and corner
mirroring so the midpoints reach the whole box.
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, Field, field_validator

from smgo.config import settings
from smgo.lib.bounds import BoundCache, init_gamma, lower_bounds, update_gamma
from smgo.lib.core import History, Sample, SearchSpace, add_sample, best, enumerate_vertices
from smgo.lib.errors import (
    BudgetExhausted,
    Infeasible,
    NonFiniteValue,
    PoolExhausted,
    ProtocolViolation,
    TooFewSamples,
)
from smgo.util.numeric import lex_argmin, tolerance

logger = logging.getLogger(__name__)


class Mode(str, Enum):
    INIT = "init"
    THETA = "theta"
    PSI = "psi"


class EngineConfig(BaseModel):
    alpha: float = Field(default_factory=lambda: settings.alpha)
    mu: float = Field(default_factory=lambda: settings.mu)
    budget: int = Field(default_factory=lambda: settings.budget)
    seed: int = 0
    eps_eq: float = Field(default_factory=lambda: settings.eps_eq)
    # None: settings.eps_dup_rel times the box diameter
    eps_dup: Optional[float] = None

    @field_validator("alpha")
    @classmethod
    def _alpha_range(cls, v: float) -> float:
        if not 0.0 <= v < 1.0:
            raise ValueError(f"alpha must lie in [0, 1), got {v}")
        return v

    @field_validator("mu")
    @classmethod
    def _mu_range(cls, v: float) -> float:
        if not v > 1.0:
            raise ValueError(f"mu must exceed 1, got {v}")
        return v

    @field_validator("budget")
    @classmethod
    def _budget_positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"budget must be at least 1, got {v}")
        return v

    @field_validator("seed")
    @classmethod
    def _seed_unsigned(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"seed must be non-negative, got {v}")
        return v


@dataclass
class IterationReport:
    iteration: int
    mode: Mode
    next_point: np.ndarray
    gamma: float
    best_z: float
    predicted_lower: Optional[float] = None
    predicted_uncertainty: Optional[float] = None


class EngineSnapshot(BaseModel):
    n: int
    n0: int
    gamma: float
    best_x: List[float]
    best_z: float
    pool_size: int
    pending: bool


# ---------------------------------------------------------------------------
# Mode theta
# ---------------------------------------------------------------------------

def _segment_points(history: History, indices: np.ndarray, mu_gamma: float) -> np.ndarray:
    xb = history.X[history.best_index]
    zb = history.Z[history.best_index]
    diff = history.X[indices] - xb
    dist = np.linalg.norm(diff, axis=1)
    slope = (history.Z[indices] - zb) / dist
    a = np.clip((1.0 - slope / mu_gamma) / 2.0, 0.0, 0.5)
    return xb + a[:, None] * diff


def exploitation_candidates(history: History, gamma: float, mu: float) -> np.ndarray:
    """Intersection of the best sample's cone with each other sample's cone on their segment.

    One row per sample other than the best, in sample order.
    """
    if history.n < 2:
        raise TooFewSamples(f"Exploitation needs two samples, have {history.n}")
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    others = np.delete(np.arange(history.n), history.best_index)
    return _segment_points(history, others, mu * gamma)


def _pick_exploitation(
    locations: np.ndarray,
    lowers: np.ndarray,
    x_best: np.ndarray,
    z_best: float,
    mu_gamma: float,
    eps_eq: float,
) -> Tuple[np.ndarray, float]:
    best_cone = z_best - mu_gamma * np.linalg.norm(locations - x_best, axis=1)
    feasible = lowers <= best_cone + eps_eq * np.maximum(1.0, np.abs(best_cone))
    if not np.any(feasible):
        raise Infeasible("No exploitation candidate lies on the best sample's cone")
    z_min = float(np.min(lowers[feasible]))
    tied = np.flatnonzero(feasible & (lowers <= z_min + tolerance(z_min, eps_eq)))
    i = lex_argmin(locations, tied)
    return locations[i].copy(), float(lowers[i])


def select_exploitation(
    candidates: np.ndarray,
    history: History,
    gamma: float,
    mu: float,
    eps_eq: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """Lowest lower bound among candidates where the bound comes from the best sample's cone."""
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    if candidates.shape[0] == 0:
        raise TooFewSamples("No exploitation candidates")
    eps_eq = settings.eps_eq if eps_eq is None else eps_eq
    mg = mu * gamma
    lowers = lower_bounds(candidates, history.X, history.Z, mg)
    x_best, z_best = best(history)
    return _pick_exploitation(candidates, lowers, x_best, z_best, mg, eps_eq)


def improvement_met(z_lb: float, best_z: float, alpha: float, gamma: float, eps_eq: Optional[float] = None) -> bool:
    eps_eq = settings.eps_eq if eps_eq is None else eps_eq
    threshold = best_z - alpha * gamma
    return z_lb <= threshold + tolerance(threshold, eps_eq)


class ExploitationCache:
    """Exploitation candidates and their lower-bound cones, reusable while the best
    index and gamma stay put."""

    def __init__(self, dim: int):
        self.bounds = BoundCache(dim, key_width=1, with_upper=False)
        self.anchor: Optional[Tuple[int, float]] = None

    def ensure(self, history: History, mu: float) -> None:
        anchor = (history.best_index, history.gamma)
        if self.anchor == anchor:
            return
        self.bounds.clear()
        self.bounds.gamma = history.gamma
        others = np.delete(np.arange(history.n), history.best_index)
        self.bounds.append(_segment_points(history, others, mu * history.gamma), others[:, None], history, mu)
        self.anchor = anchor

    def refresh(self, history: History, sample: Sample, index: int, mu: float) -> None:
        if self.anchor != (history.best_index, history.gamma):
            self.anchor = None
            return
        self.bounds.absorb(sample, index, mu)
        loc = _segment_points(history, np.array([index]), mu * history.gamma)
        self.bounds.append(loc, np.array([[index]]), history, mu)

    def pick(self, history: History, mu: float, eps_eq: float) -> Tuple[np.ndarray, float]:
        x_best, z_best = best(history)
        return _pick_exploitation(
            self.bounds.locations, self.bounds.lower, x_best, z_best, mu * history.gamma, eps_eq
        )


# ---------------------------------------------------------------------------
# Mode psi
# ---------------------------------------------------------------------------

class ExplorationPool:
    """Midpoints of every sample pair, plus midpoints between every sample and every
    mirrored corner.

    A mirrored corner takes the cost of its nearest sample; that virtual cone enters
    only the bounds of its own midpoints and is re-estimated at every selection.
    """

    def __init__(self, dim: int, vertices: np.ndarray):
        self.vertices = np.asarray(vertices, dtype=float)
        self.pairs = BoundCache(dim)
        self.mirrors = BoundCache(dim)
        self.nearest_index = np.zeros(len(self.vertices), dtype=np.int64)
        self.nearest_dist = np.full(len(self.vertices), np.inf)

    def __len__(self) -> int:
        return len(self.pairs) + len(self.mirrors)

    @property
    def gamma(self) -> float:
        return self.pairs.gamma

    def _track_nearest(self, x: np.ndarray, index: int) -> None:
        d = np.linalg.norm(self.vertices - x, axis=1)
        closer = d < self.nearest_dist
        self.nearest_dist[closer] = d[closer]
        self.nearest_index[closer] = index

    def _add_mirrors(self, history: History, index: int, mu: float) -> None:
        x = history.X[index]
        keys = np.column_stack([np.full(len(self.vertices), index), np.arange(len(self.vertices))])
        self.mirrors.append((x + self.vertices) / 2.0, keys, history, mu)

    def build(self, history: History, mu: float) -> None:
        self.pairs.gamma = self.mirrors.gamma = history.gamma
        for j in range(history.n):
            self._track_nearest(history.X[j], j)
            if j:
                i = np.arange(j)
                keys = np.column_stack([i, np.full(j, j)])
                self.pairs.append((history.X[:j] + history.X[j]) / 2.0, keys, history, mu)
            self._add_mirrors(history, j, mu)

    def refresh(self, history: History, sample: Sample, index: int, mu: float) -> None:
        for cache in (self.pairs, self.mirrors):
            cache.rescale(history.gamma)
            cache.absorb(sample, index, mu)
        if index:
            i = np.arange(index)
            keys = np.column_stack([i, np.full(index, index)])
            self.pairs.append((history.X[:index] + sample.x) / 2.0, keys, history, mu)
        self._track_nearest(sample.x, index)
        self._add_mirrors(history, index, mu)

    def mirror_bounds(self, history: History, gamma: float, mu: float) -> Tuple[np.ndarray, np.ndarray]:
        """Lower and upper bounds of the corner midpoints including the virtual corner cone."""
        loc = self.mirrors.locations
        v = self.mirrors.keys[:, 1]
        z_virtual = history.Z[self.nearest_index[v]]
        depth = mu * gamma * np.linalg.norm(loc - self.vertices[v], axis=1)
        lower = np.maximum(self.mirrors.lower, z_virtual - depth)
        upper = np.minimum(self.mirrors.upper, z_virtual + depth)
        return lower, upper

    def candidates(self, history: History, gamma: float, mu: float) -> List[Tuple[np.ndarray, np.ndarray]]:
        """(locations, uncertainty) per block: sample pairs first, then corner mirrors."""
        lower, upper = self.mirror_bounds(history, gamma, mu)
        return [(self.pairs.locations, self.pairs.uncertainty), (self.mirrors.locations, upper - lower)]


def refresh_exploration_pool(
    pool: ExplorationPool,
    history: History,
    new_sample: Sample,
    space: SearchSpace,
    gamma: float,
    mu: float,
) -> ExplorationPool:
    """Fold a sample already appended to `history` into the pool."""
    index = history.n - 1
    if not np.array_equal(history.X[index], new_sample.x):
        raise ProtocolViolation("The new sample must be the last one in the history")
    history.gamma = gamma
    pool.refresh(history, new_sample, index, mu)
    return pool


def select_exploration(
    pool: ExplorationPool,
    history: History,
    gamma: float,
    mu: float,
    eps_eq: Optional[float] = None,
) -> Tuple[np.ndarray, float]:
    """Midpoint of widest uncertainty; lexicographic among ties; skips existing samples.

    Returns the point and its uncertainty.
    """
    eps_eq = settings.eps_eq if eps_eq is None else eps_eq
    if len(pool) == 0:
        raise PoolExhausted("Exploration pool is empty")
    blocks = pool.candidates(history, gamma, mu)
    lam = np.concatenate([b[1] for b in blocks])
    offsets = np.cumsum([0] + [len(b[1]) for b in blocks])

    def rows(idx: np.ndarray) -> np.ndarray:
        out = np.empty((len(idx), history.space.dim))
        block = np.searchsorted(offsets, idx, side="right") - 1
        for b, (loc, _) in enumerate(blocks):
            sel = block == b
            out[sel] = loc[idx[sel] - offsets[b]]
        return out

    excluded = np.zeros(len(lam), dtype=bool)
    while not np.all(excluded):
        lam_max = float(np.max(lam[~excluded]))
        # not tolerance(): lambda scales with gamma (seeded near zero), so ties are relative to |lam_max|
        tied = np.flatnonzero(~excluded & (lam >= lam_max - eps_eq * abs(lam_max)))
        tied_rows = rows(tied)
        k = lex_argmin(tied_rows, np.arange(len(tied)))
        x, i = tied_rows[k], tied[k]
        if history.nearest_distance(x) >= history.eps_dup:
            return x.copy(), float(lam[i])
        excluded[i] = True
        for b, (loc, _) in enumerate(blocks):
            near = np.linalg.norm(loc - x, axis=1) < history.eps_dup
            excluded[offsets[b] : offsets[b + 1]] |= near
    raise PoolExhausted("Every exploration candidate coincides with an existing sample")


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------

class SMGOEngine:
    def __init__(self, config: EngineConfig, space: SearchSpace, initial_samples: Sequence[Sample]):
        if not initial_samples:
            raise TooFewSamples("At least one initial sample is required")
        self.config = config
        self.space = space
        self.history = History.from_samples(space, initial_samples, eps_dup=config.eps_dup)
        self.history.n0 = len(initial_samples)
        self.history.gamma = max(init_gamma(initial_samples), settings.gamma_seed)

        if space.dim <= settings.vertex_cap:
            vertices = enumerate_vertices(space)
        else:
            vertices = space.sample_vertices(2 ** settings.vertex_cap, config.seed)
            logger.warning("D=%d exceeds the vertex cap; mirroring %d sampled corners", space.dim, len(vertices))
        self.pool = ExplorationPool(space.dim, vertices)
        self.pool.build(self.history, config.mu)
        self.exploit = ExploitationCache(space.dim)

        self.reports: List[IterationReport] = []
        self._pending: Optional[np.ndarray] = None

    @classmethod
    def create(cls, config: EngineConfig, space: SearchSpace, initial_samples: Sequence[Sample]) -> "SMGOEngine":
        return cls(config, space, initial_samples)

    @property
    def n(self) -> int:
        return self.history.n

    @property
    def gamma(self) -> float:
        return self.history.gamma

    @property
    def best(self) -> Tuple[np.ndarray, float]:
        return best(self.history)

    @property
    def pending(self) -> bool:
        return self._pending is not None

    def snapshot(self) -> EngineSnapshot:
        x, z = self.best
        return EngineSnapshot(
            n=self.n,
            n0=self.history.n0,
            gamma=self.gamma,
            best_x=x.tolist(),
            best_z=z,
            pool_size=len(self.pool),
            pending=self.pending,
        )

    def _try_exploit(self) -> Optional[IterationReport]:
        h, cfg = self.history, self.config
        if h.n < 2:
            return None
        self.exploit.ensure(h, cfg.mu)
        x, z_lb = self.exploit.pick(h, cfg.mu, cfg.eps_eq)
        _, z_best = best(h)
        if not improvement_met(z_lb, z_best, cfg.alpha, h.gamma, cfg.eps_eq):
            return None
        if h.nearest_distance(x) < h.eps_dup:
            logger.debug("Exploitation point %s already sampled; exploring instead", x)
            return None
        return IterationReport(h.n, Mode.THETA, x, h.gamma, z_best, predicted_lower=z_lb)

    def ask(self) -> np.ndarray:
        if self._pending is not None:
            raise ProtocolViolation("ask() called twice without tell()")
        if self.n >= self.config.budget:
            raise BudgetExhausted(f"Budget of {self.config.budget} evaluations spent")
        report = self._try_exploit()
        if report is None:
            x, lam = select_exploration(self.pool, self.history, self.gamma, self.config.mu, self.config.eps_eq)
            report = IterationReport(self.n, Mode.PSI, x, self.gamma, self.best[1], predicted_uncertainty=lam)
        report.next_point = self.space.clip(report.next_point)
        self.reports.append(report)
        self._pending = report.next_point
        logger.debug("n=%d mode=%s gamma=%.6g best=%.6g", report.iteration, report.mode.value, report.gamma, report.best_z)
        return report.next_point.copy()

    def tell(self, z: float) -> "SMGOEngine":
        if self._pending is None:
            raise ProtocolViolation("tell() called without a pending ask()")
        if not np.isfinite(z):
            raise NonFiniteValue(f"Cost value {z!r} is not finite")
        h, mu = self.history, self.config.mu
        s = Sample(self._pending, z)
        h.validate(s)
        gamma_new = update_gamma(h.gamma, h, s)
        index = h.n
        add_sample(h, s)
        h.gamma = gamma_new
        self.pool.refresh(h, s, index, mu)
        self.exploit.refresh(h, s, index, mu)
        self._pending = None
        return self


def run(
    f: Callable[[np.ndarray], float],
    initial_points: Sequence[np.ndarray],
    config: EngineConfig,
    space: SearchSpace,
) -> Tuple[Tuple[np.ndarray, float], List[IterationReport]]:
    """Evaluate the initial points, then ask/tell until `config.budget` evaluations are spent."""
    if len(initial_points) == 0:
        raise TooFewSamples("At least one initial point is required")
    if len(initial_points) > config.budget:
        raise ValueError(f"{len(initial_points)} initial points exceed the budget of {config.budget}")
    samples = [Sample(np.asarray(x, dtype=float), f(np.asarray(x, dtype=float))) for x in initial_points]
    engine = SMGOEngine(config, space, samples)
    while engine.n < config.budget:
        x = engine.ask()
        engine.tell(f(x))
    x_best, z_best = engine.best
    logger.info("Finished %d evaluations: best z=%.6g gamma=%.6g", engine.n, z_best, engine.gamma)
    return (x_best, z_best), engine.reports
