"""PNG figures for reports: Kaplan-Meier curves, ROC curves and metric boxplots."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 120,
}
GROUP_COLORS = {"high": "#c0392b", "medium": "#7f8c8d", "low": "#2467a8"}


def _save(fig, path):
    # no Software/date metadata so equal inputs give equal files
    fig.savefig(path, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_km(curves: dict, path, title: str = "", p_value: float | None = None) -> None:
    """Step plot of one Kaplan-Meier curve per group label."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.4))
        for label, km in curves.items():
            t = np.r_[0.0, km.times]
            s = np.r_[1.0, km.survival]
            ax.step(t, s, where="post", label=f"{label} (n={int(km.at_risk[0])})",
                    color=GROUP_COLORS.get(label))
        ax.set_xlabel("days")
        ax.set_ylabel("progression-free probability")
        ax.set_ylim(0, 1.02)
        if p_value is not None:
            ax.text(0.98, 0.95, f"log-rank p = {p_value:.3g}", transform=ax.transAxes, ha="right", va="top")
        ax.set_title(title)
        ax.legend(frameon=False, loc="lower left")
        fig.tight_layout()
        _save(fig, path)


def plot_roc(curves: dict, path, title: str = "") -> None:
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(3.6, 3.4))
        ax.plot([0, 1], [0, 1], ls=":", color="0.6", lw=1)
        for label, roc in curves.items():
            ax.plot(roc.fpr, roc.tpr, label=f"{label} (AUC {roc.auc:.3f})")
        ax.set_xlabel("false positive rate")
        ax.set_ylabel("true positive rate")
        ax.set_aspect("equal")
        ax.set_title(title)
        ax.legend(frameon=False, loc="lower right")
        fig.tight_layout()
        _save(fig, path)


def plot_boxplot(values: dict, path, ylabel: str = "c-index", title: str = "") -> None:
    """One box per method over the repeat values; missing values are skipped."""
    names = list(values)
    data = [[v for v in values[k] if v is not None] for k in names]
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(max(3.0, 0.9 * len(names) + 1.5), 3.4))
        ax.boxplot(data, tick_labels=names, showmeans=True)
        ax.set_ylabel(ylabel)
        ax.set_title(title)
        plt.setp(ax.get_xticklabels(), rotation=30, ha="right")
        fig.tight_layout()
        _save(fig, path)


__all__ = ["plot_boxplot", "plot_km", "plot_roc"]
