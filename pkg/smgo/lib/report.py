"""Aggregate per-trial best-so-far traces and write them as CSV/JSON and SVG."""
import json
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

FLOAT_FORMAT = "%.17g"
SUMMARY_COLUMNS = ["n", "mean", "median", "q25", "q75", "min", "max"]


def best_z_matrix(traces: Sequence[pd.DataFrame]) -> np.ndarray:
    """Stack the best_z columns of equal-length traces into a (trials, N) array."""
    if not traces:
        raise ValueError("No trial traces to aggregate")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"Trials have different lengths: {sorted(lengths)}")
    return np.vstack([t["best_z"].to_numpy(dtype=float) for t in traces])


def aggregate(traces: Sequence[pd.DataFrame]) -> pd.DataFrame:
    """Per-iteration statistics of best_z across trials."""
    B = best_z_matrix(traces)
    return pd.DataFrame(
        {
            "n": traces[0]["n"].to_numpy(dtype=int),
            "mean": B.mean(axis=0),
            "median": np.median(B, axis=0),
            "q25": np.percentile(B, 25, axis=0),
            "q75": np.percentile(B, 75, axis=0),
            "min": B.min(axis=0),
            "max": B.max(axis=0),
        },
        columns=SUMMARY_COLUMNS,
    )


def write_csv(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
    return path


def emit_summary(traces: Sequence[pd.DataFrame], fmt: str, path: Path) -> Path:
    """Write the aggregate table to `path` (suffix replaced to match `fmt`)."""
    summary = aggregate(traces)
    if fmt == "csv":
        return write_csv(summary, path.with_suffix(".csv"))
    if fmt == "json":
        out = path.with_suffix(".json")
        out.parent.mkdir(parents=True, exist_ok=True)
        payload = {col: summary[col].tolist() for col in SUMMARY_COLUMNS}
        out.write_text(json.dumps(payload, indent=2), encoding="utf-8")
        return out
    raise ValueError(f"Unknown summary format '{fmt}' (expected csv or json)")


def read_summary(path: Path) -> pd.DataFrame:
    if path.suffix == ".json":
        return pd.DataFrame(json.loads(path.read_text(encoding="utf-8")), columns=SUMMARY_COLUMNS)
    return pd.read_csv(path)


def plot_figure(summary: pd.DataFrame, title: str = "", log_y: bool = False):
    """Median best value with the interquartile band versus iteration."""
    if summary is None or len(summary) == 0:
        raise ValueError("Cannot plot an empty summary")
    fig, ax = plt.subplots(figsize=(7, 4))
    n = summary["n"].to_numpy()
    ax.fill_between(n, summary["q25"], summary["q75"], alpha=0.3, linewidth=0, label="interquartile")
    ax.plot(n, summary["median"].to_numpy(), linewidth=1.5, label="median")
    if log_y:
        if np.all(summary["q25"].to_numpy() > 0):
            ax.set_yscale("log")
        else:
            ax.set_yscale("symlog")
    ax.set_xlabel("evaluations")
    ax.set_ylabel("best value")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper right")
    fig.tight_layout()
    return fig


def emit_plot(summary: pd.DataFrame, path: Path, title: str = "", log_y: bool = False) -> Path:
    fig = plot_figure(summary, title=title, log_y=log_y)
    path = path.with_suffix(".svg")
    path.parent.mkdir(parents=True, exist_ok=True)
    with plt.rc_context({"svg.hashsalt": "smgo", "svg.fonttype": "none"}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return path
