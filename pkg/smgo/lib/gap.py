"""Optimality-gap upper bound: best sampled cost minus the minimum of the lower bound,
the minimum being taken over a dense regular grid of the box."""
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel

from smgo.config import settings
from smgo.lib.bounds import lower_bounds
from smgo.lib.core import History, SearchSpace, best
from smgo.lib.errors import DimensionTooLarge
from smgo.util.numeric import iter_grid


class GapCertificate(BaseModel):
    best_z: float
    min_lower: float
    min_lower_x: List[float]
    delta_bar: float
    grid_resolution: int
    # the grid minimum overshoots the continuous one by at most this much
    slack: float
    gamma: float
    gamma_source: Literal["estimated", "known"]


def default_resolution(dim: int) -> int:
    if dim not in settings.gap_resolution:
        raise DimensionTooLarge(f"No gap certificate for D={dim} (max D={settings.gap_max_dim})")
    return settings.gap_resolution[dim]


def gap_upper_bound(
    history: History,
    space: SearchSpace,
    mu: float,
    resolution: Optional[int] = None,
    gamma: Optional[float] = None,
) -> GapCertificate:
    """Certificate from the grid minimum of the lower bound.

    With `gamma` omitted the history's estimate is used and the certificate is only
    heuristic; pass a known Lipschitz constant to make it a guarantee up to `slack`.
    """
    if space.dim > settings.gap_max_dim:
        raise DimensionTooLarge(f"Gap certificate limited to D <= {settings.gap_max_dim}, got D={space.dim}")
    resolution = default_resolution(space.dim) if resolution is None else int(resolution)
    if resolution < 2:
        raise ValueError(f"resolution must be at least 2, got {resolution}")
    _, z_best = best(history)
    g = history.gamma if gamma is None else float(gamma)
    mg = mu * g

    min_lower, min_x = np.inf, None
    for chunk in iter_grid(space.lower, space.upper, resolution, settings.grid_chunk):
        lb = lower_bounds(chunk, history.X, history.Z, mg)
        i = int(np.argmin(lb))
        if lb[i] < min_lower:
            min_lower, min_x = float(lb[i]), chunk[i]

    step = (space.upper - space.lower) / (resolution - 1)
    return GapCertificate(
        best_z=z_best,
        min_lower=min_lower,
        min_lower_x=min_x.tolist(),
        delta_bar=z_best - min_lower,
        grid_resolution=resolution,
        slack=float(mg * 0.5 * np.linalg.norm(step)),
        gamma=g,
        gamma_source="estimated" if gamma is None else "known",
    )
