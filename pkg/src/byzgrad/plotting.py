"""Figures for run traces and sweeps, rendered straight to files."""

from __future__ import annotations

import math
from collections.abc import Sequence
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from byzgrad.trace import RunTrace  # noqa: E402


def _series(trace: RunTrace, key: str) -> tuple[np.ndarray, np.ndarray]:
    t = np.array([r.t for r in trace.rounds], dtype=float)
    y = np.array([r.metrics.get(key, math.nan) for r in trace.rounds], dtype=float)
    return t, y


def _semilog(ax, t, y, label):
    mask = np.isfinite(y) & (y > 0)
    if mask.any():
        ax.semilogy(t[mask] + 1, y[mask], label=label)
    else:
        ax.plot(t, np.nan_to_num(y), label=label)


def plot_metrics(trace: RunTrace, path: str | Path) -> Path:
    """Diameter, distance to X* and running-average gap against rounds."""
    fig, axes = plt.subplots(1, 3, figsize=(13, 3.6))
    for ax, key, title in zip(
        axes,
        ("diameter", "max_dist_to_Xstar", "gap"),
        ("consensus diameter", "max distance to X*", "running-average gap"),
    ):
        t, y = _series(trace, key)
        _semilog(ax, t, y, key)
        ax.set_xscale("log")
        ax.set_xlabel("round t + 1")
        ax.set_title(title)
        ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_states(trace: RunTrace, path: str | Path, coord: int = 0) -> Path:
    """Trajectories of one state coordinate for every normal agent."""
    hist = trace.state_history() if trace.rounds or trace.final_states is not None else np.zeros((0, 0, 1))
    fig, ax = plt.subplots(figsize=(6.5, 3.8))
    for k, agent in enumerate(trace.normal):
        if hist.size:
            ax.plot(np.arange(1, hist.shape[0] + 1), hist[:, k, coord], label=f"agent {agent}")
    xstar = trace.header.get("xstar")
    if xstar and xstar.get("kind") == "interval" and coord == 0:
        ax.axhspan(xstar["lo"], xstar["hi"], color="grey", alpha=0.25, label="X*")
        ax.axhline(xstar["lo"], color="grey", lw=0.8)
    ax.set_xscale("log")
    ax.set_xlabel("round t + 1")
    ax.set_ylabel(f"x[{coord}]")
    ax.legend(fontsize=8)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def plot_rate(horizons: Sequence[int], gaps: Sequence[float], slope: float, path: str | Path) -> Path:
    """log-log gap against horizon with the fitted line and a -1/2 reference."""
    h = np.asarray(horizons, dtype=float)
    g = np.asarray(gaps, dtype=float)
    fig, ax = plt.subplots(figsize=(5, 3.8))
    ax.loglog(h, g, "o-", label=f"gap (slope {slope:.3f})")
    ax.loglog(h, g[0] * np.sqrt(h[0] / h), "--", color="grey", label="T^-1/2")
    ax.set_xlabel("horizon T")
    ax.set_ylabel("optimality gap")
    ax.legend()
    ax.grid(True, which="both", alpha=0.3)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=110)
    plt.close(fig)
    return path


def render_trace_figures(trace: RunTrace, out_dir: str | Path, stem: str = "trace") -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [plot_metrics(trace, out / f"{stem}_metrics.png")]
    dim = trace.rounds[0].states.shape[1] if trace.rounds else 0
    for c in range(min(dim, 2)):
        paths.append(plot_states(trace, out / f"{stem}_states_x{c}.png", c))
    return paths
