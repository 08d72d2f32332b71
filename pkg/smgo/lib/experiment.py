"""Multi-trial experiment runner: one seeded uniform start per trial, per-trial CSV
traces, an aggregate summary and an optional convergence plot."""
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Literal, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field, field_validator
from tqdm import tqdm

from smgo.config import settings
from smgo.lib.bench import canonical_name, make_function, random_search
from smgo.lib.core import Sample
from smgo.lib.engine import EngineConfig, Mode, SMGOEngine
from smgo.lib.gap import GapCertificate, gap_upper_bound
from smgo.lib.report import aggregate, emit_plot, emit_summary, write_csv

logger = logging.getLogger(__name__)


class ExperimentSpec(BaseModel):
    function: str
    dim: int
    budget: int = Field(default_factory=lambda: settings.budget)
    trials: int = Field(default_factory=lambda: settings.trials)
    optimizer: Literal["smgo", "random"] = "smgo"
    alpha: float = Field(default_factory=lambda: settings.alpha)
    mu: float = Field(default_factory=lambda: settings.mu)
    seed: int = Field(default_factory=lambda: settings.base_seed)
    out: Path = Field(default_factory=lambda: settings.out_root)
    gap: bool = False
    plot: bool = False
    log_y: bool = False
    format: Literal["csv", "json"] = "csv"
    workers: int = Field(default_factory=lambda: settings.max_workers)

    @field_validator("trials", "budget", "dim", "workers")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError(f"must be at least 1, got {v}")
        return v

    @field_validator("function")
    @classmethod
    def _known_function(cls, v: str) -> str:
        return canonical_name(v)

    @field_validator("seed")
    @classmethod
    def _unsigned(cls, v: int) -> int:
        if v < 0:
            raise ValueError(f"seed must be non-negative, got {v}")
        return v

    def trial_seed(self, trial: int) -> int:
        return self.seed + trial

    @property
    def stem(self) -> str:
        return f"{self.function}_{self.dim}d"

    def engine_config(self, trial: int) -> EngineConfig:
        return EngineConfig(alpha=self.alpha, mu=self.mu, budget=self.budget, seed=self.trial_seed(trial))


@dataclass
class TrialRecord:
    trial: int
    seed: int
    rows: pd.DataFrame
    wall_us: np.ndarray
    gap: Optional[GapCertificate] = None


class ExperimentSummary(BaseModel):
    spec: ExperimentSpec
    final_mean: float
    final_median: float
    trial_files: List[Path]
    summary_file: Path
    plot_file: Optional[Path] = None
    gap_file: Optional[Path] = None


def _trace_frame(dim: int, ns, modes, X, Z, gammas) -> pd.DataFrame:
    Z = np.asarray(Z, dtype=float)
    data: Dict[str, object] = {"n": np.asarray(ns, dtype=int), "mode": list(modes)}
    X = np.asarray(X, dtype=float).reshape(len(Z), dim)
    for d in range(dim):
        data[f"x{d}"] = X[:, d]
    data["z"] = Z
    data["best_z"] = np.minimum.accumulate(Z)
    data["gamma"] = np.asarray(gammas, dtype=float)
    return pd.DataFrame(data)


def _timed(f: Callable[[np.ndarray], float], sink: List[int]) -> Callable[[np.ndarray], float]:
    def wrapped(x):
        t0 = time.perf_counter_ns()
        z = f(x)
        sink.append((time.perf_counter_ns() - t0) // 1000)
        return z
    return wrapped


def run_trial(spec: ExperimentSpec, trial: int) -> TrialRecord:
    bench = make_function(spec.function, spec.dim)
    space = bench.bounds
    seed = spec.trial_seed(trial)

    if spec.optimizer == "random":
        wall: List[int] = []
        _, trace = random_search(_timed(bench.evaluate, wall), space, spec.budget, seed)
        rows = _trace_frame(
            spec.dim, np.arange(1, spec.budget + 1), ["random"] * spec.budget, trace.X, trace.Z,
            np.full(spec.budget, np.nan),
        )
        return TrialRecord(trial, seed, rows, np.asarray(wall, dtype=np.int64))

    x0 = space.uniform(np.random.default_rng(seed))
    t0 = time.perf_counter_ns()
    engine = SMGOEngine(spec.engine_config(trial), space, [Sample(x0, bench(x0))])
    wall = [(time.perf_counter_ns() - t0) // 1000]
    modes, X, Z, gammas = [Mode.INIT.value], [x0], [engine.history.Z[0]], [engine.gamma]
    while engine.n < spec.budget:
        t0 = time.perf_counter_ns()
        x = engine.ask()
        z = bench(x)
        engine.tell(z)
        wall.append((time.perf_counter_ns() - t0) // 1000)
        modes.append(engine.reports[-1].mode.value)
        X.append(x)
        Z.append(z)
        gammas.append(engine.gamma)

    gap = None
    if spec.gap:
        gap = gap_upper_bound(engine.history, space, spec.mu)
    rows = _trace_frame(spec.dim, np.arange(1, spec.budget + 1), modes, X, Z, gammas)
    return TrialRecord(trial, seed, rows, np.asarray(wall, dtype=np.int64), gap)


def trial_path(spec: ExperimentSpec, trial: int) -> Path:
    return spec.out / f"{spec.stem}_t{trial}.csv"


def write_trial(spec: ExperimentSpec, record: TrialRecord) -> Path:
    path = write_csv(record.rows, trial_path(spec, record.trial))
    timing = pd.DataFrame({"n": record.rows["n"], "wall_us": record.wall_us})
    write_csv(timing, spec.out / "timing" / path.name)
    return path


def run_experiment(spec: ExperimentSpec, progress: bool = True) -> ExperimentSummary:
    """Run every trial, write each trace as soon as it finishes, then aggregate in trial order."""
    if spec.gap and spec.dim > settings.gap_max_dim:
        tqdm.write(f"[warn] Gap certificate needs D <= {settings.gap_max_dim}; skipping it for D={spec.dim}.")
        spec = spec.model_copy(update={"gap": False})
    if spec.gap and spec.optimizer != "smgo":
        tqdm.write("[warn] Gap certificate needs SMGO bounds; skipping it for the random baseline.")
        spec = spec.model_copy(update={"gap": False})
    make_function(spec.function, spec.dim)
    spec.out.mkdir(parents=True, exist_ok=True)

    records: Dict[int, TrialRecord] = {}
    failed: List[int] = []
    with ThreadPoolExecutor(max_workers=spec.workers) as ex:
        futures = {ex.submit(run_trial, spec, t): t for t in range(spec.trials)}
        for fut in tqdm(as_completed(futures), total=spec.trials, desc="Trials", disable=not progress):
            t = futures[fut]
            try:
                record = fut.result()
            except Exception as e:
                tqdm.write(f"[error] Trial {t} failed: {e}")
                logger.exception("Trial %d failed", t)
                failed.append(t)
                continue
            write_trial(spec, record)
            records[t] = record

    if failed:
        raise RuntimeError(f"{len(failed)} of {spec.trials} trials failed: {sorted(failed)}")

    ordered = [records[t] for t in range(spec.trials)]
    traces = [r.rows for r in ordered]
    summary_file = emit_summary(traces, spec.format, spec.out / f"{spec.stem}_summary")
    summary = aggregate(traces)

    plot_file = None
    if spec.plot:
        title = f"{spec.stem} ({spec.optimizer}, {spec.trials} trials)"
        plot_file = emit_plot(summary, spec.out / f"{spec.stem}_summary", title=title, log_y=spec.log_y)

    gap_file = None
    if spec.gap:
        gap_file = spec.out / f"{spec.stem}_gap.json"
        payload = [{"trial": r.trial, **r.gap.model_dump()} for r in ordered]
        gap_file.write_text(json.dumps(payload, indent=2), encoding="utf-8")

    return ExperimentSummary(
        spec=spec,
        final_mean=float(summary["mean"].iloc[-1]),
        final_median=float(summary["median"].iloc[-1]),
        trial_files=[trial_path(spec, t) for t in range(spec.trials)],
        summary_file=summary_file,
        plot_file=plot_file,
        gap_file=gap_file,
    )
