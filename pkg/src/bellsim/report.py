"""Static figures written next to the CSV tables."""
from __future__ import annotations

import math
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .estimator import SweepRow  # noqa: E402
from .reference import qm_S  # noqa: E402


def _finish(fig, ax, path: str | Path) -> Path:
    ax.grid(alpha=0.3)
    ax.legend(frameon=False, fontsize=9)
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def plot_sweep(rows: Sequence[SweepRow], path: str | Path, title: str | None = None) -> Path:
    """|S| against phi: QM curve, coincidence and event-basis simulation points."""
    fig, ax = plt.subplots(figsize=(6, 4))
    lo = min(r.phi for r in rows)
    hi = max(r.phi for r in rows)
    fine = np.linspace(lo, hi, 200)
    ax.plot(np.degrees(fine), [qm_S(p) for p in fine], "r-", lw=1.5, label="quantum prediction")
    deg = [r.phi_deg for r in rows]
    ax.errorbar(deg, [r.S_coinc for r in rows], yerr=[r.stderr for r in rows],
                fmt="D", color="tab:green", ms=5, label="coincidence |S|")
    ax.plot(deg, [r.S_event for r in rows], "o", mfc="none", color="k", ms=5,
            label="event-basis |S|")
    ax.axhline(2.0, color="0.5", ls="--", lw=1)
    ax.axhline(2 * math.sqrt(2), color="0.5", ls=":", lw=1)
    ax.set_xlabel(r"$\phi$ (deg)")
    ax.set_ylabel(r"$|S|$")
    if title:
        ax.set_title(title, fontsize=10)
    return _finish(fig, ax, path)


def plot_window_scan(windows: Sequence[int], s_abs: Sequence[float],
                     stderr: Sequence[float], path: str | Path,
                     event_value: float | None = None) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.errorbar(windows, s_abs, yerr=stderr, fmt="s-", ms=4, color="tab:blue",
                label="coincidence |S|")
    if event_value is not None:
        ax.axhline(event_value, color="k", ls="--", lw=1, label="event-basis |S|")
    ax.set_xlabel("coincidence window (ticks)")
    ax.set_ylabel(r"$|S|$")
    return _finish(fig, ax, path)
