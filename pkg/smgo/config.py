from typing import Dict
from pathlib import Path
from pydantic import BaseModel, Field


class Settings(BaseModel):
    # Engine
    alpha: float = 0.001
    mu: float = 1.025
    budget: int = 500

    # Tolerances
    eps_eq: float = 1e-9
    eps_dup_rel: float = 1e-12
    gamma_seed: float = 1e-9

    # Above this, vertex enumeration refuses and the engine mirrors a subsample
    vertex_cap: int = 15

    # Gap certificate: grid points per axis, keyed by dimension
    gap_resolution: Dict[int, int] = Field(default_factory=lambda: {1: 1001, 2: 501, 3: 101})
    gap_max_dim: int = 3

    # Experiments
    trials: int = 100
    optimizer: str = "smgo"
    output_format: str = "csv"
    base_seed: int = 0

    # Paths
    out_root: Path = Path("out")

    # Processing
    max_workers: int = 4
    grid_chunk: int = 4096


settings = Settings()
