"""Convergence plots of estimator traces (one line per chain)."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

GOLDEN = (np.sqrt(5) - 1.0) / 2.0
FIG_WIDTH = 6.0

PARAMS = {
    "axes.labelsize": 10,
    "font.size": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "lines.linewidth": 0.8,
    "figure.figsize": (FIG_WIDTH, FIG_WIDTH * GOLDEN),
    "svg.hashsalt": "fgmc",
    "svg.fonttype": "none",
}


def plot_traces(
    traces: Sequence,
    path: str | Path,
    per_site: int | None = None,
    ylabel: str = "",
    title: str = "",
    reference: float | None = None,
    reference_label: str = "exact",
    reported_value: float | None = None,
) -> Path:
    """Write one polyline per trace of ``log2(estimate)`` (divided by ``per_site`` if given)."""
    path = Path(path)
    with plt.rc_context(PARAMS):
        fig, ax = plt.subplots()
        scale = 1.0 / per_site if per_site else 1.0
        for tr in traces:
            ax.plot(tr.k, tr.log2 * scale, alpha=0.8)
        if reference is not None and np.isfinite(reference):
            ax.axhline(reference, color="k", ls="--", lw=0.8, label=reference_label)
        if reported_value is not None:
            ax.axhline(reported_value, color="tab:red", ls=":", lw=0.8, label="reported")
        if reference is not None or reported_value is not None:
            ax.legend(loc="best", frameon=False)
        ax.set_xlabel("number of samples $K$")
        ax.set_ylabel(ylabel)
        if title:
            ax.set_title(title)
        ax.ticklabel_format(axis="x", style="sci", scilimits=(0, 3))
        fig.tight_layout()
        fig.savefig(path, format=path.suffix.lstrip(".") or "svg", metadata={"Date": None})
        plt.close(fig)
    return path
