"""Plot helpers: the four-panel training curves and sweep comparisons."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

CURVE_PANELS = ("advantage", "pareto", "agreement", "novelty")


def read_trace(path) -> dict[str, list[float]]:
    columns: dict[str, list[float]] = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            for key, raw in row.items():
                columns.setdefault(key, []).append(float(raw) if raw else float("nan"))
    return columns


def plot_curves(trace_paths: dict[str, Path], out_path) -> Path:
    """Four panels (advantage / pareto / agreement / novelty) over epochs,
    one line per labeled trace file."""
    fig, axes = plt.subplots(1, 4, figsize=(16, 3.4))
    for label, path in trace_paths.items():
        trace = read_trace(path)
        epochs = trace["epoch"]
        for ax, panel in zip(axes, CURVE_PANELS):
            ax.plot(epochs, trace[panel], marker="o", markersize=3, label=label)
    for ax, panel in zip(axes, CURVE_PANELS):
        ax.set_title(panel)
        ax.set_xlabel("epoch")
        ax.grid(alpha=0.3)
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)


def plot_sweep(summary_path, out_path, metrics=("advantage", "pareto", "agreement", "novelty")) -> Path:
    """Final metrics against the swept value from a sweep summary.csv."""
    rows = []
    with open(summary_path, newline="") as fh:
        for row in csv.DictReader(fh):
            if row["status"] == "ok":
                rows.append(row)
    if not rows:
        raise ValueError(f"no successful runs in {summary_path}")
    labels = [row["value"] for row in rows]
    fig, axes = plt.subplots(1, len(metrics), figsize=(4 * len(metrics), 3.2))
    for ax, metric in zip(axes, metrics):
        values = [float(row[metric]) if row[metric] else float("nan") for row in rows]
        ax.plot(range(len(rows)), values, marker="o")
        ax.set_xticks(range(len(rows)))
        ax.set_xticklabels(labels, rotation=30, fontsize=8)
        ax.set_title(metric)
        ax.grid(alpha=0.3)
    fig.suptitle(f"sweep over {rows[0]['axis']}")
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
    return Path(out_path)
