"""SVG views of reports and λ sweeps. The CSVs stay the source of truth."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

# SVG bytes must not vary between identical runs
plt.rcParams["svg.hashsalt"] = "piu-fair"
SVG_METADATA = {"Date": None, "Creator": None}

STAT_LABELS = {
    "stat_a": "(a) mean unfair effect",
    "stat_b": "(b) std of conditional means",
    "stat_c": "(c) PIU upper bound",
    "stat_d": "(d) PIU",
}


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, format="svg", bbox_inches="tight", metadata=SVG_METADATA)
    plt.close(fig)


def plot_statistics(frame: pd.DataFrame, path: str | Path, title: str = "Unfair-effect statistics") -> None:
    """
    Grouped bars: one group per statistic, one bar per method.

    Args:
        frame: Rows from reports_frame (columns method, stat_a..stat_d)
        path: Output .svg
    """
    stats = list(STAT_LABELS)
    methods = list(frame["method"])
    x = np.arange(len(stats))
    width = 0.8 / max(len(methods), 1)

    fig, ax = plt.subplots(figsize=(10, 5))
    for i, (_, row) in enumerate(frame.iterrows()):
        values = [row[s] if pd.notna(row[s]) else 0.0 for s in stats]
        bars = ax.bar(x + i * width, values, width, label=row["method"], edgecolor="black", linewidth=0.5)
        for bar, s in zip(bars, stats):
            if pd.isna(row[s]):
                ax.annotate("n/a", (bar.get_x() + bar.get_width() / 2, 0.0),
                            ha="center", va="bottom", fontsize=8)
    ax.set_xticks(x + width * (len(methods) - 1) / 2)
    ax.set_xticklabels([STAT_LABELS[s] for s in stats])
    ax.set_ylabel("Value")
    ax.set_title(title)
    ax.legend(loc="upper right", framealpha=0.9)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    _save(fig, path)


def plot_sweep(frame: pd.DataFrame, path: str | Path, title: str = "λ sweep") -> None:
    """
    Two panels against λ: test accuracy, and the mean unfair effect with the PIU upper bound.

    Args:
        frame: Sweep summary (columns penalty, lam, accuracy, stat_a, stat_c)
        path: Output .svg
    """
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(12, 5))
    for penalty, group in frame.groupby("penalty", sort=True):
        group = group.sort_values("lam")
        ax1.plot(group["lam"], group["accuracy"], marker="o", label=penalty)
        ax2.plot(group["lam"], group["stat_a"], marker="o", label=f"{penalty}: (a)")
        ax2.plot(group["lam"], group["stat_c"], marker="s", linestyle="--", label=f"{penalty}: (c)")
    ax1.set_xlabel("λ")
    ax1.set_ylabel("Test accuracy")
    ax1.grid(alpha=0.3)
    ax1.legend()
    ax2.set_xlabel("λ")
    ax2.set_ylabel("Statistic")
    ax2.grid(alpha=0.3)
    ax2.legend()
    fig.suptitle(title)
    fig.tight_layout()
    _save(fig, path)
