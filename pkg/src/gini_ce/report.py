"""Figures and a CSV summary rendered from a JPSRO trace file."""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .errors import ConfigError  # noqa: E402
from .jpsro import read_trace  # noqa: E402

golden_mean = (np.sqrt(5) - 1.0) / 2.0
fig_width = 5.0
colors = ["#08589e", "#e6550d", "#31a354", "#756bb1", "#636363"]

params = {
    "axes.prop_cycle": matplotlib.cycler(color=colors),
    "axes.labelsize": 10,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 9,
    "legend.fontsize": 8,
    "legend.frameon": False,
    "lines.linewidth": 1.2,
    "lines.markersize": 3,
    "figure.figsize": [fig_width, fig_width * golden_mean],
    "figure.dpi": 150,
    "savefig.bbox": "tight",
}

SUMMARY_FIELDS = ("iterations", "final_gap_ms", "final_gap_mw", "min_gap_ms", "value_sum_ms",
                  "value_sum_mw", "final_pool_size", "final_unique", "total_wall_ms")


def _columns(records):
    it = np.array([r["iteration"] for r in records])
    return {
        "iteration": it,
        "gap_ms": np.array([r["gap_ms"] for r in records]),
        "gap_mw": np.array([r["gap_mw"] for r in records]),
        "value_ms": np.array([r["value_ms"] for r in records]),
        "value_mw": np.array([r["value_mw"] for r in records]),
        "unique": np.array([r["unique"] for r in records]),
    }


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_gaps(cols, title, path):
    fig, ax = plt.subplots()
    floor = 1e-16
    ax.semilogy(cols["iteration"], np.maximum(cols["gap_ms"], floor), marker="o", label="meta-solver")
    ax.semilogy(cols["iteration"], np.maximum(cols["gap_mw"], floor), marker="s", ls="--",
                label="max-welfare evaluation")
    ax.set_xlabel("iteration")
    ax.set_ylabel("equilibrium gap")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_values(cols, title, path):
    fig, ax = plt.subplots()
    for p in range(cols["value_ms"].shape[1]):
        ax.plot(cols["iteration"], cols["value_ms"][:, p], marker="o", label=f"player {p}")
    ax.plot(cols["iteration"], cols["value_ms"].sum(axis=1), color="k", ls=":", label="sum")
    ax.set_xlabel("iteration")
    ax.set_ylabel("expected return under meta-solver")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def plot_unique(cols, title, path):
    fig, ax = plt.subplots()
    for p in range(cols["unique"].shape[1]):
        ax.step(cols["iteration"], cols["unique"][:, p], where="post", label=f"player {p}")
    ax.set_xlabel("iteration")
    ax.set_ylabel("unique policies")
    ax.set_title(title)
    ax.legend()
    return _save(fig, path)


def summarize(records) -> dict:
    last = records[-1]
    return {
        "iterations": len(records),
        "final_gap_ms": last["gap_ms"],
        "final_gap_mw": last["gap_mw"],
        "min_gap_ms": min(r["gap_ms"] for r in records),
        "value_sum_ms": float(np.sum(last["value_ms"])),
        "value_sum_mw": float(np.sum(last["value_mw"])),
        "final_pool_size": " ".join(map(str, last["pool_size"])),
        "final_unique": " ".join(map(str, last["unique"])),
        "total_wall_ms": float(sum(r["wall_ms"] for r in records)),
    }


def render_report(trace_path, out_dir, title=None) -> list[Path]:
    """Write gap, value and unique-policy figures plus ``summary.csv`` into ``out_dir``."""
    records = read_trace(trace_path)
    if not records:
        raise ConfigError(f"trace {trace_path} has no records")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    title = title or Path(trace_path).stem
    cols = _columns(records)
    with plt.rc_context(params):
        paths = [
            plot_gaps(cols, title, out / "gap.png"),
            plot_values(cols, title, out / "value.png"),
            plot_unique(cols, title, out / "unique.png"),
        ]
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_FIELDS)
        writer.writeheader()
        writer.writerow(summarize(records))
    return paths + [summary_path]
