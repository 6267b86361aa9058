"""Figure rendering for the analytics reports.

All plots go straight to files (SVG by default) next to the delimited
output; nothing here opens a display.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .analytics import DataEfficiencyRecord, ParetoPoint, pareto_frontier  # noqa: E402

_STYLE = {
    "figure.figsize": (7.0, 4.5),
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "font.size": 10,
}


def render_pareto(points: Sequence[ParetoPoint], path: str,
                  frontier: Sequence[ParetoPoint] | None = None) -> None:
    """Scatter of error rate vs. training FLOPs (both log-scale) with the
    non-dominated frontier drawn as a step line."""
    if frontier is None:
        frontier = pareto_frontier(points)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        ax.scatter([p.x for p in points], [p.y for p in points], s=28, color="#6b7aa1",
                   zorder=3)
        for p in points:
            ax.annotate(p.model_id, (p.x, p.y), fontsize=7,
                        textcoords="offset points", xytext=(4, 4))
        fx = [p.x for p in frontier]
        fy = [p.y for p in frontier]
        ax.plot(fx, fy, drawstyle="steps-post", color="#c0392b", linewidth=1.5,
                label="frontier", zorder=2)
        ax.set_xscale("log")
        ax.set_yscale("log")
        ax.set_xlabel("training FLOPs")
        ax.set_ylabel("error rate (1 - accuracy)")
        ax.legend()
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_efficiency(records: Iterable[DataEfficiencyRecord], path: str) -> None:
    """Scatter of benchmark score vs. per-language training tokens, one
    color per language."""
    recs = list(records)
    langs = sorted({r.lang for r in recs})
    cmap = plt.get_cmap("tab20")
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        for i, lang in enumerate(langs):
            rows = [r for r in recs if r.lang == lang]
            ax.scatter([r.lang_tokens for r in rows], [r.score for r in rows],
                       s=28, color=cmap(i % 20), label=lang, zorder=3)
        ax.set_xscale("log")
        ax.set_xlabel("language-specific training tokens")
        ax.set_ylabel("average score")
        if langs:
            ax.legend(fontsize=7, ncol=2)
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)


def render_similarity(metric: dict[str, float], uplift: dict[str, float], path: str,
                      xlabel: str = "language distance") -> None:
    """Scatter of per-language uplift against a distance proxy."""
    langs = sorted(set(metric) & set(uplift))
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots()
        xs = [metric[l] for l in langs]
        ys = [uplift[l] for l in langs]
        ax.scatter(xs, ys, s=30, color="#2d6a4f", zorder=3)
        for l, x, y in zip(langs, xs, ys):
            ax.annotate(l, (x, y), fontsize=8, textcoords="offset points", xytext=(4, 4))
        ax.set_xlabel(xlabel)
        ax.set_ylabel("relative improvement")
        fig.tight_layout()
        fig.savefig(path)
        plt.close(fig)
