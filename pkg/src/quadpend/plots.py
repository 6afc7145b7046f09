"""SVG figures of a closed-loop run.

Figures are built on :class:`matplotlib.figure.Figure` directly rather than
through ``pyplot``, so no GUI backend or global figure state is involved and
runs in separate processes or threads do not interfere.
"""

from __future__ import annotations

import os

import matplotlib
import numpy as np
from matplotlib.figure import Figure

STICK_PERIOD = 0.25
LOG_FLOOR = 1e-16

STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "svg.fonttype": "none",
    # fixed ids so identical logs give identical files
    "svg.hashsalt": "quadpend",
}


def _save(fig: Figure, path: str) -> str:
    with matplotlib.rc_context({"svg.hashsalt": STYLE["svg.hashsalt"]}):
        fig.savefig(path, format="svg", metadata={"Date": None})
    return path


def alignment_figure(log) -> Figure:
    """``e3.y`` and ``e3.z`` against time."""
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(6.0, 3.2))
        ax = fig.add_subplot()
        ax.plot(log.t, log.e3_dot_y, label=r"$e_3^T y$")
        ax.plot(log.t, log.e3_dot_z, label=r"$e_3^T z$", linestyle="--")
        ax.axhline(1.0, color="0.5", linewidth=0.8)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("last coordinate")
        ax.set_ylim(-1.05, 1.05)
        ax.legend(loc="lower right")
        fig.tight_layout()
    return fig


def lyapunov_figure(log) -> Figure:
    """``V``, ``V1`` and ``V2`` on a log axis; zeros are drawn at :data:`LOG_FLOOR`."""
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(6.0, 3.2))
        ax = fig.add_subplot()
        for vals, label, style in ((log.V, "V", "-"), (log.V1, "V1", "--"), (log.V2, "V2", ":")):
            ax.semilogy(log.t, np.maximum(vals, LOG_FLOOR), linestyle=style, label=label)
        ax.set_xlabel("t [s]")
        ax.set_ylabel("Lyapunov value")
        ax.legend(loc="upper right")
        fig.tight_layout()
    return fig


def stick_indices(t: np.ndarray, dt: float, period: float = STICK_PERIOD) -> np.ndarray:
    stride = max(1, int(round(period / dt)))
    return np.arange(0, len(t), stride)


def stick_figure(log, period: float = STICK_PERIOD) -> Figure:
    """Pivot-to-bob segments every ``period`` seconds on the x1-x3 and x2-x3 planes."""
    idx = stick_indices(log.t, log.dt, period)
    pivot = np.asarray(log.x)[idx]
    bob = pivot + log.params.l * np.asarray(log.y)[idx]
    shade = np.linspace(0.85, 0.0, len(idx)) if len(idx) > 1 else np.zeros(1)
    with matplotlib.rc_context(STYLE):
        fig = Figure(figsize=(7.0, 3.4))
        for k, (a, name) in enumerate(((0, "x1"), (1, "x2"))):
            ax = fig.add_subplot(1, 2, k + 1)
            for p, b, s in zip(pivot, bob, shade):
                c = (s, s, s)
                ax.plot([p[a], b[a]], [p[2], b[2]], color=c)
                ax.plot([b[a]], [b[2]], marker="o", markersize=3, color=c)
            ax.plot(pivot[:, a], pivot[:, 2], color="tab:blue", linewidth=0.6, alpha=0.6)
            ax.set_aspect("equal", adjustable="datalim")
            ax.set_xlabel(f"{name} [m]")
            ax.set_ylabel("x3 [m]")
        fig.tight_layout()
    return fig


def render_plots(log, out_dir, prefix: str = "run") -> list[str]:
    """Write the alignment, Lyapunov and stick-figure SVGs; returns their paths."""
    os.makedirs(out_dir, exist_ok=True)
    out = []
    for name, build in (("alignment", alignment_figure), ("lyapunov", lyapunov_figure), ("stick", stick_figure)):
        out.append(_save(build(log), os.path.join(out_dir, f"{prefix}_{name}.svg")))
    return out
