"""SVG figures: reliability diagrams and probability histograms.

Output is byte-stable across runs: the SVG date stamp is suppressed and the
id hash salt is fixed.
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .evaluation import CalibrationTable  # noqa: E402
from .screen import CohortDistribution  # noqa: E402

_RC = {"svg.hashsalt": "sweetdeep", "svg.fonttype": "none"}


def _save(fig, path: str | Path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def reliability_svg(tables: Mapping[str, CalibrationTable], path: str | Path, title: str = "Reliability") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(4.5, 4.5))
        ax.plot([0, 1], [0, 1], color="0.6", linestyle="--", linewidth=1, label="ideal")
        for name, table in tables.items():
            pts = table.curve()
            if pts:
                x, y = zip(*pts)
                ax.plot(x, y, marker="o", label=name)
        ax.set_xlim(0, 1)
        ax.set_ylim(0, 1)
        ax.set_xlabel("mean predicted P(T2D)")
        ax.set_ylabel("fraction T2D")
        ax.set_title(title)
        ax.legend(loc="upper left")
        fig.tight_layout()
        _save(fig, path)


def histogram_svg(dists: Mapping[str, CohortDistribution], path: str | Path, title: str = "Patient P(T2D)") -> None:
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(5.5, 3.5))
        n = max(len(dists), 1)
        for i, (name, d) in enumerate(dists.items()):
            width = np.diff(d.edges)
            ax.bar(d.edges[:-1] + width * i / n, d.counts, width=width / n, align="edge", label=name)
        ax.set_xlim(0, 1)
        ax.set_xlabel("patient-level P(T2D)")
        ax.set_ylabel("patients")
        ax.set_title(title)
        ax.legend()
        fig.tight_layout()
        _save(fig, path)


def metric_bars_svg(rows: list[dict], path: str | Path, metric: str = "accuracy") -> None:
    """One bar per experiment variant for a patient-level metric."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(7, 3.5))
        names = [r["variant"] for r in rows]
        vals = [np.nan if r["patient"][metric] is None else r["patient"][metric] for r in rows]
        ax.bar(range(len(names)), vals, color="tab:blue")
        ax.set_xticks(range(len(names)))
        ax.set_xticklabels(names, rotation=60, ha="right", fontsize=7)
        ax.set_ylabel(f"patient {metric} (%)")
        fig.tight_layout()
        _save(fig, path)
