"""Standalone SVG figures for solver traces, rate fits and radial profiles."""

from __future__ import annotations

import enum
from pathlib import Path

import numpy as np

from .errors import ConfigError


class PlotKind(str, enum.Enum):
    TRACE = "trace"
    RATE_FIT = "rate_fit"
    RADIAL_PROFILE = "radial_profile"


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    # stable element ids so equal inputs give equal bytes
    plt.rcParams["svg.hashsalt"] = "choquard"
    plt.rcParams["svg.fonttype"] = "none"
    return plt


def emit_plot(series: dict, kind: PlotKind | str, path: str | Path) -> Path:
    """Write one SVG.

    ``series`` holds ``x`` and ``y`` arrays (``x`` may be omitted for
    traces).  For ``rate_fit`` the log-log least-squares line is drawn and
    its slope annotated; ``slope``/``intercept`` in ``series`` override the
    fit.
    """
    kind = PlotKind(kind)
    y = np.asarray(series.get("y", []), dtype=float)
    if y.size == 0:
        raise ConfigError("cannot plot an empty series")
    x = np.asarray(series["x"], dtype=float) if "x" in series else np.arange(y.size, dtype=float)
    if x.shape != y.shape:
        raise ConfigError("x and y lengths differ")
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    try:
        if kind is PlotKind.TRACE:
            ax.plot(x, y, "-o", ms=2.5, lw=1.0)
            ax.set_xlabel("iteration")
            ax.set_ylabel(series.get("label", "objective"))
        elif kind is PlotKind.RADIAL_PROFILE:
            order = np.argsort(x, kind="stable")
            ax.plot(x[order], y[order], ".", ms=2.0)
            ax.set_xlabel("|x|")
            ax.set_ylabel(series.get("label", "u"))
        else:
            ax.loglog(x, y, "o", ms=4.0, label="data")
            if "slope" in series:
                slope, icpt = float(series["slope"]), float(series.get("intercept", 0.0))
            elif x.size >= 2:
                slope, icpt = np.polyfit(np.log(x), np.log(y), 1)
            else:
                slope = icpt = None
            if slope is not None:
                xs = np.geomspace(x.min(), x.max(), 32)
                ax.loglog(xs, np.exp(icpt) * xs**slope, "-", lw=1.0, label=f"slope {slope:.3f}")
                ax.legend(loc="best", frameon=False)
            ax.set_xlabel(series.get("xlabel", "eps"))
            ax.set_ylabel(series.get("label", "deficit"))
        if "title" in series:
            ax.set_title(series["title"])
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    finally:
        plt.close(fig)
    return path
