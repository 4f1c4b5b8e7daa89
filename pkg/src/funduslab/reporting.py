"""Report rendering: delimited metric tables plus matplotlib figures.

Every pipeline stage writes its numbers as CSV (byte-stable for a fixed
config and seed) and a PNG chart of the same series next to it.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from .config import LESIONS
from .metriclog import MetricLog, render_table

SEG_TABLE_COLUMNS = ["method", "lesion", "auc_roc", "auc_pr"]
GRADE_TABLE_COLUMNS = ["method", "accuracy", "kappa"]


def seg_results_rows(method: str, per_lesion: dict[str, dict[str, float]]) -> list[dict]:
    return [
        {
            "method": method,
            "lesion": lesion,
            "auc_roc": per_lesion[lesion]["auc_roc"],
            "auc_pr": per_lesion[lesion]["auc_pr"],
        }
        for lesion in LESIONS
    ]


def write_seg_table(rows: list[dict], out_dir: Path) -> Path:
    return MetricLog(rows).to_csv(out_dir / "segmentation_metrics.csv", SEG_TABLE_COLUMNS)


def write_grade_table(rows: list[dict], out_dir: Path) -> Path:
    return MetricLog(rows).to_csv(out_dir / "grading_metrics.csv", GRADE_TABLE_COLUMNS)


def print_table(rows: list[dict], columns: list[str]) -> None:
    print(render_table(rows, columns))


def plot_training_curves(log: MetricLog, out_path: Path, title: str = "training") -> Path:
    """Line chart of every numeric series in the log, grouped by key."""
    out_path.parent.mkdir(parents=True, exist_ok=True)
    numeric_keys = []
    for row in log.rows:
        for key, value in row.items():
            if isinstance(value, (int, float)) and key not in ("epoch", "pct_feedback"):
                if key not in numeric_keys:
                    numeric_keys.append(key)
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in numeric_keys:
        series = [(i, row[key]) for i, row in enumerate(log.rows) if key in row]
        if len(series) < 2:
            continue
        xs, ys = zip(*series)
        ax.plot(xs, ys, label=key, linewidth=1.5)
    ax.set_xlabel("log step")
    ax.set_ylabel("value")
    ax.set_title(title)
    if numeric_keys:
        ax.legend(fontsize=8, loc="best")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def plot_seg_bars(rows: list[dict], out_path: Path, title: str = "per-lesion AUC") -> Path:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    methods = sorted({r["method"] for r in rows})
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for ax, metric in zip(axes, ("auc_roc", "auc_pr")):
        width = 0.8 / max(1, len(methods))
        for k, method in enumerate(methods):
            values = [
                next(r[metric] for r in rows if r["method"] == method and r["lesion"] == lesion)
                for lesion in LESIONS
            ]
            xs = [i + k * width for i in range(len(LESIONS))]
            ax.bar(xs, values, width=width, label=method)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(LESIONS))])
        ax.set_xticklabels(LESIONS)
        ax.set_ylim(0, 1)
        ax.set_title(metric)
        ax.grid(alpha=0.3, axis="y")
    axes[0].legend(fontsize=8)
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path


def plot_simulation(log: MetricLog, out_path: Path) -> Path:
    out_path.parent.mkdir(parents=True, exist_ok=True)
    xs = log.column("pct_feedback")
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for key in ("accuracy", "kappa", "explanation"):
        ax.plot(xs, log.column(key), marker="o", label=key)
    ax.set_xlabel("% simulated feedback")
    ax.set_ylabel("score")
    ax.set_title("feedback fine-tuning trajectory")
    ax.legend()
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(out_path, dpi=110)
    plt.close(fig)
    return out_path
