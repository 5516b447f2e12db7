"""Matplotlib figure rendering for the report path.

Charts are written as SVG so they stay diffable and dependency-free to
view. SVG output is normally nondeterministic (random element ids plus a
creation date); both sources are pinned here so a regenerated report is
byte-identical to the previous one.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .analysis import GROUP_METHODS, BenchmarkTable, LossCurve

_HASHSALT = "edupack"
_METHOD_STYLES = {"ratio-of-means": "-", "mean-of-ratios": "--"}


def _save_svg(fig: plt.Figure, path: Path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": _HASHSALT}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def render_group_deltas(
    table: BenchmarkTable,
    deltas: dict[str, dict[str, dict[str, float]]],
    path: str | Path,
) -> None:
    """Group percent deltas against token volume, one line per series.

    Solid lines compare group means; dashed lines average per-benchmark
    deltas. Both methods are drawn because they answer slightly
    different questions.
    """
    labels = table.ordered_labels()
    tokens = [table.rows[lb].tokens / 1e6 for lb in labels]
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for group in sorted(table.groups):
        for method in GROUP_METHODS:
            values = [deltas[method][group][lb] for lb in labels]
            ax.plot(
                tokens,
                values,
                _METHOD_STYLES[method],
                marker="o",
                markersize=4,
                label=f"{group} ({method})",
            )
    ax.axhline(0.0, color="gray", linewidth=0.8)
    ax.set_xlabel("training tokens (millions)")
    ax.set_ylabel("delta vs base (%)")
    ax.set_title("benchmark group deltas by token budget")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, Path(path))


def render_loss_curves(curves: Sequence[LossCurve], path: str | Path) -> None:
    """Training loss against step for each curve."""
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    for curve in curves:
        steps = [s for s, _ in curve.points]
        losses = [v for _, v in curve.points]
        ax.plot(steps, losses, marker="o", markersize=3, label=curve.label)
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_title("training loss")
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    _save_svg(fig, Path(path))
