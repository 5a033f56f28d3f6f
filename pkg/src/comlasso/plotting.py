"""Figures written straight to image files with the Agg canvas."""

from __future__ import annotations

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

from .data import path_plot_data


def _save(fig, file):
    FigureCanvasAgg(fig)
    fig.savefig(file, dpi=120, bbox_inches="tight")


def plot_path(path, groups, file, columns=None, by_group=False):
    """Coefficients against the relative l1 norm of the path.

    With ``by_group`` each group gets its own panel and its own normaliser.
    """
    rows = np.array([r[1:] for r in path_plot_data(path, groups)], dtype=float)
    # columns: lambda, coefficient, group, ratio, group ratio, value
    coef = rows[:, 1].astype(int)
    panels = range(groups.K) if by_group else [None]
    fig = Figure(figsize=(5 * len(panels), 4))
    for i, k in enumerate(panels):
        ax = fig.add_subplot(1, len(panels), i + 1)
        for j in range(groups.p):
            if k is not None and groups.membership[j] != k:
                continue
            sel = coef == j
            x = rows[sel, 4] if by_group else rows[sel, 3]
            label = columns[j] if columns is not None and groups.p <= 12 else None
            ax.plot(x, rows[sel, 5], lw=1, label=label)
        ax.axhline(0.0, color="0.6", lw=0.5)
        ax.set_xlabel("relative l1 norm")
        ax.set_ylabel("coefficient")
        if k is not None:
            ax.set_title(f"group {k + 1}")
        if columns is not None and groups.p <= 12:
            ax.legend(fontsize="small")
    _save(fig, file)


def plot_cv(cv, file):
    fig = Figure(figsize=(5, 4))
    ax = fig.add_subplot()
    ax.plot(cv.lambdas, cv.error, lw=1)
    ax.axvline(cv.lambda_best, color="C3", ls="--", lw=1)
    ax.set_xscale("symlog", linthresh=max(1e-3 * cv.lambdas.max(), 1e-12))
    ax.set_xlabel("lambda")
    ax.set_ylabel("cross-validated error")
    _save(fig, file)


def plot_stability(report, file):
    probs = np.asarray(report.probabilities)
    names = report.feature_names or [f"beta_{j + 1}" for j in range(probs.size)]
    fig = Figure(figsize=(max(5, 0.25 * probs.size), 4))
    ax = fig.add_subplot()
    ax.bar(np.arange(probs.size), probs, color="C0")
    ax.set_xticks(np.arange(probs.size))
    ax.set_xticklabels(names, rotation=90, fontsize="small")
    ax.set_ylim(0, 1)
    ax.set_ylabel("selection probability")
    _save(fig, file)
