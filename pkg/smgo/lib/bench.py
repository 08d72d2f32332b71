"""Benchmark functions with their boxes and known optima, a uniform random-search
baseline, and a brute-force grid oracle."""
from dataclasses import dataclass
from typing import Callable, Dict, List, Optional, Tuple

import numpy as np

from smgo.config import settings
from smgo.lib.core import SearchSpace
from smgo.lib.errors import DimensionTooLarge, UnknownFunction
from smgo.util.numeric import iter_grid

# minimizer of x^4 - 16x^2 + 5x, i.e. the root of 4x^3 - 32x + 5 near -2.9
_ST_XMIN = -2.903534027771178
_ST_ZMIN = -39.16616570377142
_SCHWEFEL_XMIN = 420.968746
_SCHWEFEL_ZMIN = -418.9828872724338
# max over t of |sin^5(t) cos(t)|, reached at tan^2(t) = 5
_SIN5COS_MAX = (5.0 / 6.0) ** 2.5 * (1.0 / 6.0) ** 0.5


def rosenbrock(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    a, b = x[..., :-1], x[..., 1:]
    return np.sum(100.0 * (b - a**2) ** 2 + (1.0 - a) ** 2, axis=-1)


def styblinski_tang(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 0.5 * np.sum(x**4 - 16.0 * x**2 + 5.0 * x, axis=-1)


def deb1(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -np.mean(np.sin(5.0 * np.pi * x) ** 6, axis=-1)


def deb2(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -np.mean(np.sin(5.0 * np.pi * (np.abs(x) ** 0.75 - 0.05)) ** 6, axis=-1)


def schwefel(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return -np.sum(x * np.sin(np.sqrt(np.abs(x))), axis=-1)


def salomon(x: np.ndarray) -> np.ndarray:
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return 1.0 - np.cos(2.0 * np.pi * r) + 0.1 * r


def brown(x: np.ndarray) -> np.ndarray:
    sq = np.asarray(x, dtype=float) ** 2
    a, b = sq[..., :-1], sq[..., 1:]
    return np.sum(a ** (b + 1.0) + b ** (a + 1.0), axis=-1)


@dataclass(eq=False)
class BenchmarkFunction:
    name: str
    dimension: int
    bounds: SearchSpace
    batch: Callable[[np.ndarray], np.ndarray]
    known_optimum: float
    known_minimizer: Optional[np.ndarray] = None
    # upper bound on the gradient norm over the box, when a useful one is known
    lipschitz_bound: Optional[float] = None

    def evaluate(self, x: np.ndarray) -> float:
        return float(self.batch(np.asarray(x, dtype=float)))

    __call__ = evaluate


@dataclass(frozen=True)
class _Entry:
    batch: Callable[[np.ndarray], np.ndarray]
    low: float
    high: float
    optimum: Callable[[int], float]
    minimizer: Optional[float]
    lipschitz: Optional[Callable[[int], float]]
    min_dim: int = 1


REGISTRY: Dict[str, _Entry] = {
    "rosenbrock": _Entry(rosenbrock, -40.0, 5.0, lambda d: 0.0, 1.0, None, min_dim=2),
    "styblinski-tang": _Entry(
        styblinski_tang, -5.0, 5.0, lambda d: _ST_ZMIN * d, _ST_XMIN, lambda d: 172.5 * np.sqrt(d)
    ),
    "deb1": _Entry(
        deb1, -1.0, 1.0, lambda d: -1.0, 0.1, lambda d: 30.0 * np.pi * _SIN5COS_MAX / np.sqrt(d)
    ),
    # not Lipschitz at 0: d/dx x^(3/4) is unbounded there
    "deb2": _Entry(deb2, 0.0, 150.0, lambda d: -1.0, 0.15 ** (4.0 / 3.0), None),
    "schwefel": _Entry(
        schwefel, -500.0, 500.0, lambda d: _SCHWEFEL_ZMIN * d, _SCHWEFEL_XMIN,
        lambda d: (1.0 + np.sqrt(500.0) / 2.0) * np.sqrt(d),
    ),
    "salomon": _Entry(salomon, -40.0, 70.0, lambda d: 0.0, 0.0, lambda d: 2.0 * np.pi + 0.1),
    "brown": _Entry(brown, -1.0, 4.0, lambda d: 0.0, 0.0, None, min_dim=2),
}

_ALIASES = {
    "styblinskitang": "styblinski-tang",
    "styblinski_tang": "styblinski-tang",
    "debs1": "deb1",
    "deb#1": "deb1",
    "debs#1": "deb1",
    "debs2": "deb2",
    "deb#2": "deb2",
    "debs#2": "deb2",
}


def canonical_name(name: str) -> str:
    key = name.strip().lower().replace("'", "").replace(" ", "")
    key = _ALIASES.get(key, key)
    if key not in REGISTRY:
        raise UnknownFunction(f"Unknown benchmark '{name}'. Known: {', '.join(REGISTRY)}")
    return key


def make_function(name: str, dim: int) -> BenchmarkFunction:
    key = canonical_name(name)
    entry = REGISTRY[key]
    if dim < entry.min_dim:
        raise ValueError(f"{key} needs D >= {entry.min_dim}, got D={dim}")
    minimizer = None if entry.minimizer is None else np.full(dim, entry.minimizer)
    return BenchmarkFunction(
        name=key,
        dimension=dim,
        bounds=SearchSpace.cube(entry.low, entry.high, dim),
        batch=entry.batch,
        known_optimum=float(entry.optimum(dim)),
        known_minimizer=minimizer,
        lipschitz_bound=None if entry.lipschitz is None else float(entry.lipschitz(dim)),
    )


@dataclass
class SearchTrace:
    X: np.ndarray
    Z: np.ndarray
    best_z: np.ndarray


def random_search(
    f: Callable[[np.ndarray], float],
    space: SearchSpace,
    N: int,
    seed: int,
) -> Tuple[Tuple[np.ndarray, float], SearchTrace]:
    """N i.i.d. uniform samples over the box; the first one matches the engine's seeded start."""
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    rng = np.random.default_rng(seed)
    X = space.uniform(rng, N)
    Z = np.array([f(x) for x in X], dtype=float)
    trace = SearchTrace(X, Z, np.minimum.accumulate(Z))
    i = int(np.argmin(Z))
    return (X[i].copy(), float(Z[i])), trace


def _evaluate_rows(f: Callable, points: np.ndarray) -> np.ndarray:
    if isinstance(f, BenchmarkFunction):
        return f.batch(points)
    return np.array([f(p) for p in points], dtype=float)


def grid_oracle_min(
    f: Callable[[np.ndarray], float],
    space: SearchSpace,
    resolution: int,
) -> Tuple[np.ndarray, float]:
    if space.dim > settings.gap_max_dim:
        raise DimensionTooLarge(f"Grid oracle limited to D <= {settings.gap_max_dim}, got D={space.dim}")
    best_x, best_z = None, np.inf
    for chunk in iter_grid(space.lower, space.upper, resolution, settings.grid_chunk):
        values = _evaluate_rows(f, chunk)
        i = int(np.argmin(values))
        if values[i] < best_z:
            best_x, best_z = chunk[i].copy(), float(values[i])
    return best_x, best_z


def list_functions() -> List[Tuple[str, float, float, str]]:
    """(name, low, high, z* formula) for every registered benchmark."""
    rows = []
    for key, entry in REGISTRY.items():
        z1 = entry.optimum(1)
        zstar = f"{z1:g}*D" if entry.optimum(2) != z1 else f"{z1:g}"
        rows.append((key, entry.low, entry.high, zstar))
    return rows
