"""Figures written next to the CSV outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "camp": dict(marker="o", color="tab:red", label="CAMP"),
    "amp": dict(marker="s", color="tab:blue", label="AMP"),
    "oamp-vamp": dict(marker="^", color="tab:green", label="OAMP/VAMP"),
}


def _save(fig, path):
    fig.tight_layout()
    # fixed metadata keeps the files reproducible
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)


def plot_mse_vs_kappa(series, path, title=None, ceiling_db=10.0):
    """``series`` maps algorithm -> [(kappa, mean_db, stderr_db), ...].

    Means above ``ceiling_db`` (divergent trials dominate them) are drawn as
    arrows on the top edge and annotated with their value.
    """
    import math

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    clipped = []
    for alg, pts in sorted(series.items()):
        pts = sorted(pts)
        style = STYLE.get(alg, dict(label=alg))
        k = [p[0] for p in pts]
        db = [p[1] if math.isfinite(p[1]) and p[1] <= ceiling_db else math.nan for p in pts]
        se = [p[2] if math.isfinite(p[2]) else 0.0 for p in pts]
        ax.errorbar(k, db, yerr=se, capsize=2, **style)
        clipped += [(p[0], p[1], style.get("color")) for p in pts if not (p[1] <= ceiling_db)]
    ax.set_xscale("log")
    ax.set_xlabel("condition number")
    ax.set_ylabel("MSE [dB]")
    if clipped:
        lo = ax.get_ylim()[0]
        ax.set_ylim(lo, ceiling_db)
        for kappa, db, color in clipped:
            ax.plot([kappa], [ceiling_db], marker="^", color=color, clip_on=False, markersize=8)
            ax.annotate(f"{db:.3g} dB", (kappa, ceiling_db), textcoords="offset points", xytext=(4, -12),
                        fontsize=7, color=color)
    if title:
        ax.set_title(title)
    if series:
        ax.legend(loc="lower right")
    ax.grid(True, which="both", alpha=0.3)
    _save(fig, path)


def plot_trajectory(mse_by_algorithm, path, title=None):
    """``mse_by_algorithm`` maps algorithm -> per-iteration MSE (linear)."""
    import numpy as np

    fig, ax = plt.subplots(figsize=(5.0, 3.6))
    for alg, mse in mse_by_algorithm.items():
        mse = np.asarray(mse, dtype=float)
        style = dict(STYLE.get(alg, dict(label=alg)))
        style.pop("marker", None)
        with np.errstate(divide="ignore"):
            ax.plot(np.arange(len(mse)), 10 * np.log10(mse), **style)
    ax.set_xlabel("iteration")
    ax.set_ylabel("MSE [dB]")
    if title:
        ax.set_title(title)
    ax.legend()
    ax.grid(True, alpha=0.3)
    _save(fig, path)
