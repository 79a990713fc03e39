"""Report figures written straight to image files.

Uses ``matplotlib.figure.Figure`` directly (no pyplot state), so rendering
is safe from any thread and never opens a window.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.figure import Figure
from matplotlib.patches import Rectangle

from .evaluation import AlignmentReport, BenchmarkReport
from .geometry import Detection
from .layout import LineProposal

__all__ = ["plot_benchmark", "plot_cer", "plot_layout"]

_STYLE = {"font.size": 9, "axes.spines.top": False, "axes.spines.right": False}


def _new_figure(width=6.0, height=3.6) -> Figure:
    import matplotlib

    with matplotlib.rc_context(_STYLE):
        fig = Figure(figsize=(width, height), dpi=120, layout="constrained")
        fig.add_subplot(1, 1, 1)
    return fig


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    # fixed metadata keeps repeated renders byte-identical
    metadata = {"Software": None} if path.suffix.lower() == ".png" else {}
    fig.savefig(path, metadata=metadata)
    return path


def plot_benchmark(reports: Sequence[BenchmarkReport], path, title: str = "Decode time per run") -> Path:
    """Bar chart of mean seconds per run with sample-std error bars."""
    fig = _new_figure()
    ax = fig.axes[0]
    names = [r.name for r in reports]
    means = np.array([r.mean_seconds for r in reports])
    stds = np.array([r.std_seconds for r in reports])
    bars = ax.bar(names, means, yerr=stds, capsize=4, color="#4c72b0", alpha=0.85)
    for bar, m, s in zip(bars, means, stds):
        ax.annotate(f"{m:.3g} ± {s:.2g} s", (bar.get_x() + bar.get_width() / 2, m + s),
                    ha="center", va="bottom", fontsize=8, xytext=(0, 2), textcoords="offset points")
    if len(reports) == 2 and means[0] > 0:
        ax.set_title(f"{title} (ratio {means[1] / means[0]:.1f}x)")
    else:
        ax.set_title(title)
    ax.set_ylabel("seconds per run")
    return _save(fig, path)


def plot_cer(reports: Sequence[AlignmentReport], path, title: str = "Per-line CER") -> Path:
    """Per-line CER with the macro mean as a reference line."""
    fig = _new_figure()
    ax = fig.axes[0]
    cers = np.array([r.cer for r in reports])
    idx = np.arange(1, len(cers) + 1)
    ax.bar(idx, cers * 100, color="#dd8452", width=0.8)
    if len(cers):
        ax.axhline(cers.mean() * 100, color="k", lw=1, ls="--", label=f"mean {cers.mean() * 100:.2f}%")
        ax.legend(frameon=False)
    ax.set_xlabel("line")
    ax.set_ylabel("CER (%)")
    ax.set_title(title)
    return _save(fig, path)


def plot_layout(
    words: Sequence[Detection],
    lines: Sequence[LineProposal],
    path,
    title: str = "Word detections and line proposals",
) -> Path:
    """Page sketch: word boxes in grey, line boxes outlined; y grows downward."""
    fig = _new_figure(4.5, 6.0)
    ax = fig.axes[0]
    for w in words:
        b = w.box
        ax.add_patch(Rectangle((b.x, b.y), b.w, b.h, fc="0.8", ec="0.5", lw=0.5))
    for i, ln in enumerate(lines):
        b = ln.box
        ax.add_patch(Rectangle((b.x, b.y), b.w, b.h, fill=False, ec="#c44e52", lw=1.2))
        ax.annotate(str(i), (b.x, b.y), fontsize=7, color="#c44e52", xytext=(-8, 0),
                    textcoords="offset points", va="top")
    ax.add_patch(Rectangle((0, 0), 1, 1, fill=False, ec="k", lw=0.8, ls=":"))
    xs = [0.0, 1.0] + [w.box.x for w in words] + [w.box.x2 for w in words]
    ys = [0.0, 1.0] + [w.box.y for w in words] + [w.box.y2 for w in words]
    ax.set_xlim(min(xs) - 0.02, max(xs) + 0.02)
    ax.set_ylim(max(ys) + 0.02, min(ys) - 0.02)
    ax.set_aspect("equal")
    ax.set_title(title)
    return _save(fig, path)
