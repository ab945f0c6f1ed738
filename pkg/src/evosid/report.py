"""Figures written next to the CSV outputs of CLI runs.

Every function takes the data it draws plus an output path and writes a
PNG with the non-interactive Agg backend.
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .engine import RunLog  # noqa: E402
from .voronoi import VelocityGrid  # noqa: E402

DPI = 110
_LABEL_COLORS = {"mse": "tab:blue", "ls": "tab:red", "semblance": "tab:green"}


def _save(fig, path) -> str:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def convergence(log: RunLog, path, title: str = "", log_scale: bool = True) -> str:
    """Best and mean fitness per generation, colored by fitness label."""
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    gens = np.array([r.generation for r in log])
    best = np.array([r.best for r in log], dtype=float)
    mean = np.array([r.mean for r in log], dtype=float)
    labels = [r.fitness_label for r in log]
    if log_scale:
        # exact fits reach 0; keep them on the axis
        floor = np.nanmin(best[(best > 0) & np.isfinite(best)], initial=1.0) * 1e-2
        best = np.where(best > 0, best, floor)
        mean = np.where(mean > 0, mean, floor)
        ax.set_yscale("log")
    ax.plot(gens, mean, color="0.6", lw=1, label="mean")
    for lab in dict.fromkeys(labels):
        base = lab.split("@")[0]
        mask = np.array([x == lab for x in labels])
        ax.plot(gens[mask], best[mask], ".", ms=4, color=_LABEL_COLORS.get(base), label=f"best ({lab})")
    ax.set_xlabel("generation")
    ax.set_ylabel("fitness")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=8)
    return _save(fig, path)


def predicted_vs_target(pred: np.ndarray, target: np.ndarray, path, expression: str = "") -> str:
    fig, ax = plt.subplots(figsize=(4.5, 4.5))
    ax.plot(target, pred, "o", ms=4)
    finite = np.isfinite(pred)
    lo = float(min(target.min(), pred[finite].min() if finite.any() else target.min()))
    hi = float(max(target.max(), pred[finite].max() if finite.any() else target.max()))
    ax.plot([lo, hi], [lo, hi], "k--", lw=0.8)
    ax.set_xlabel("target")
    ax.set_ylabel("prediction")
    if expression:
        text = expression if len(expression) <= 60 else expression[:57] + "..."
        ax.set_title(text, fontsize=8)
    return _save(fig, path)


def tree_counts(depths: Sequence[int], series: Mapping[str, Sequence[int]], path) -> str:
    """Tree counts against depth on a log axis (counts may exceed float range)."""
    fig, ax = plt.subplots(figsize=(5.5, 4.0))
    for name, counts in series.items():
        logs = [math.log10(c) if c > 0 else np.nan for c in counts]
        ax.plot(depths, logs, "o-", label=name)
    ax.set_xlabel("max depth")
    ax.set_ylabel("log10(number of trees)")
    ax.legend()
    return _save(fig, path)


def velocity_models(models: Mapping[str, VelocityGrid], path, v_range=None) -> str:
    """Side-by-side velocity images sharing one color scale."""
    n = len(models)
    fig, axes = plt.subplots(1, n, figsize=(3.6 * n, 3.4), squeeze=False)
    if v_range is None:
        v_range = (
            min(float(m.velocities.min()) for m in models.values()),
            max(float(m.velocities.max()) for m in models.values()),
        )
    im = None
    for ax, (name, m) in zip(axes[0], models.items()):
        w, d = m.extent
        im = ax.imshow(m.velocities, extent=(0, w, d, 0), vmin=v_range[0], vmax=v_range[1], cmap="viridis")
        ax.set_title(name)
        ax.set_xlabel("x (m)")
    axes[0][0].set_ylabel("depth (m)")
    fig.colorbar(im, ax=list(axes[0]), label="velocity (m/s)", shrink=0.85)
    fig.savefig(path, dpi=DPI, metadata={"Software": None})
    plt.close(fig)
    return str(path)


def shot_gathers(seis, path, clip: float = 0.02) -> str:
    """Every shot as a receiver-by-time image, clipped at ``clip`` of the peak."""
    ns = len(seis.shots)
    fig, axes = plt.subplots(1, ns, figsize=(3.2 * ns, 4.0), squeeze=False)
    peak = float(np.abs(seis.data).max()) or 1.0
    t_end = seis.n_samples * seis.dt
    rec = seis.receivers
    for k, ax in enumerate(axes[0]):
        ax.imshow(
            seis.data[k], aspect="auto", cmap="gray", vmin=-clip * peak, vmax=clip * peak,
            extent=(rec[0], rec[-1], t_end, 0),
        )
        ax.set_title(f"shot at {seis.shots[k]:.0f} m")
        ax.set_xlabel("receiver x (m)")
    axes[0][0].set_ylabel("time (s)")
    return _save(fig, path)


def scale_scan(scales: Sequence[float], values: Sequence[float], path, ylabel: str = "1 - semblance") -> str:
    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    ax.plot(scales, values, "o-")
    k = int(np.argmin(values))
    ax.axvline(scales[k], color="tab:red", lw=0.8, ls="--")
    ax.set_xlabel("velocity scale factor")
    ax.set_ylabel(ylabel)
    return _save(fig, path)
