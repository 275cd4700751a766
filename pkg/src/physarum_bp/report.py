"""Convergence figures rendered next to the CSV/JSON outputs.

matplotlib is an optional dependency (``pip install physarum-bp[plot]``)
and is only imported when a figure is requested.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

from .stepper import StepRecord

METRICS = (
    ("var", r"var$(\mu(t^k))$"),
    ("err_x", r"err$_{x^*}$"),
    ("err_dual", r"err$_{\mathrm{Dual}}$"),
)


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def _series(trace: Sequence[StepRecord], key: str):
    pts = [(r.t, getattr(r, key)) for r in trace if getattr(r, key) is not None]
    pts = [(t, y) for t, y in pts if y > 0]
    return [p[0] for p in pts], [p[1] for p in pts]


def plot_trace(trace: Sequence[StepRecord], path, title: str = "", tau: float | None = None) -> Path:
    """var, recovery error and dual error against pseudo-time, log-log axes."""
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(6.0, 4.0))
    for key, label in METRICS:
        t, y = _series(trace, key)
        if t:
            ax.loglog(t, y, marker="o", markersize=3, linewidth=1.2, label=label)
    if tau is not None:
        ax.axhline(tau, color="0.5", linestyle="--", linewidth=0.8, label=r"$\tau_T$")
    ax.set_xlabel("time $t$")
    ax.set_ylabel("metric")
    if title:
        ax.set_title(title, fontsize=10)
    ax.grid(True, which="major", alpha=0.3)
    ax.legend(fontsize=8, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_bench(traces: dict[str, Sequence[StepRecord]], path, tau: float | None = None) -> Path:
    """One panel per metric, one curve per benchmark instance."""
    plt = _pyplot()
    fig, axes = plt.subplots(1, len(METRICS), figsize=(4.0 * len(METRICS), 3.6), sharex=True)
    for ax, (key, label) in zip(axes, METRICS):
        for name, trace in traces.items():
            t, y = _series(trace, key)
            if t:
                ax.loglog(t, y, marker=".", linewidth=1.0, label=name)
        if key == "var" and tau is not None:
            ax.axhline(tau, color="0.5", linestyle="--", linewidth=0.8)
        ax.set_title(label, fontsize=10)
        ax.set_xlabel("time $t$")
        ax.grid(True, alpha=0.3)
    axes[0].legend(fontsize=7, frameon=False)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
