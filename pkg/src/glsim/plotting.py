"""Matplotlib rendering of the sweep figures next to their CSV series."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

_AXES = {
    "fig3a": ("measurement noise variance", "mean BER", True, True),
    "fig3b": ("hacked node fraction", "recovery RMSE", False, True),
    "fig4": ("measurement noise variance", "fraction of pairs", True, False),
    "fig5": ("measurement noise variance", "mean BER", True, True),
    "fig6": ("measurement noise variance", "fraction of pairs", True, False),
}


def render_figure(figure_id: str, series: dict[str, tuple[list, list]], path) -> None:
    """One labelled line per series; log axes where the metric spans decades."""
    xlabel, ylabel, logx, logy = _AXES[figure_id]
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for name in sorted(series):
        xs, ys = series[name]
        label = name.split("_", 1)[-1] if "_" in name else name
        ax.plot(xs, ys, marker="o", ms=3.5, lw=1.2, label=label)
    if logx:
        ax.set_xscale("log")
    if logy:
        positive = [y for _, ys in series.values() for y in ys if y > 0]
        if positive:
            ax.set_yscale("log")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
