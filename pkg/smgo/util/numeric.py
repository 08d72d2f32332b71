from typing import Iterator, Sequence

import numpy as np


def tolerance(value: float, eps: float) -> float:
    """Absolute tolerance for comparing against `value`: eps relative to max(1, |value|)."""
    return eps * max(1.0, abs(float(value)))


def lex_less(a: np.ndarray, b: np.ndarray) -> bool:
    """Componentwise comparison from dimension 0 upward; smaller value wins."""
    diff = np.flatnonzero(a != b)
    if diff.size == 0:
        return False
    return bool(a[diff[0]] < b[diff[0]])


def lex_order(points: np.ndarray) -> np.ndarray:
    """Indices sorting rows of `points` lexicographically (column 0 primary)."""
    points = np.atleast_2d(points)
    if points.shape[0] == 0:
        return np.empty(0, dtype=np.intp)
    # lexsort treats the last key as primary
    return np.lexsort(points.T[::-1])


def lex_argmin(points: np.ndarray, indices: Sequence[int]) -> int:
    """Among `indices`, the row of `points` that is lexicographically smallest."""
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 1:
        return int(indices[0])
    return int(indices[lex_order(points[indices])[0]])


def grid_size(dim: int, resolution: int) -> int:
    return int(resolution) ** int(dim)


def iter_grid(
    lower: np.ndarray,
    upper: np.ndarray,
    resolution: int,
    chunk: int = 4096,
) -> Iterator[np.ndarray]:
    """Yield the regular grid of resolution**D points over the box, in chunks.

    Axis coordinates come from linspace so every box corner is on the grid.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    dim = lower.size
    axes = [np.linspace(lower[d], upper[d], resolution) for d in range(dim)]
    shape = (resolution,) * dim
    total = grid_size(dim, resolution)
    for start in range(0, total, chunk):
        flat = np.arange(start, min(total, start + chunk))
        idx = np.unravel_index(flat, shape)
        yield np.column_stack([axes[d][idx[d]] for d in range(dim)])
