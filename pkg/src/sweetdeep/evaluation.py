"""Confusion counts, accuracy-type metrics, and binned calibration (ECE).

Positive class is T2D. Rates whose denominator is zero are reported as NaN
(serialized as ``null``), never as 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

N_BINS = 10


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion(probs: Sequence[float], labels: Sequence[int], threshold: float = 0.5) -> ConfusionCounts:
    """Tally counts; ``p >= threshold`` is a T2D call."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    pos = p >= threshold
    return ConfusionCounts(
        tp=int(np.sum(pos & (y == 1))),
        fp=int(np.sum(pos & (y == 0))),
        fn=int(np.sum(~pos & (y == 1))),
        tn=int(np.sum(~pos & (y == 0))),
    )


def _ratio(num: float, den: float) -> float:
    return num / den if den else math.nan


@dataclass(frozen=True)
class Rates:
    accuracy: float
    sensitivity: float
    specificity: float
    macro_f1: float


def metrics_from_counts(c: ConfusionCounts) -> Rates:
    f1_pos = _ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn)
    f1_neg = _ratio(2 * c.tn, 2 * c.tn + c.fp + c.fn)
    return Rates(
        accuracy=_ratio(c.tp + c.tn, c.total),
        sensitivity=_ratio(c.tp, c.tp + c.fn),
        specificity=_ratio(c.tn, c.tn + c.fp),
        macro_f1=0.5 * (f1_pos + f1_neg),
    )


def pooled_counts(per_fold: Iterable[ConfusionCounts]) -> ConfusionCounts:
    total = ConfusionCounts()
    for c in per_fold:
        total = total + c
    return total


@dataclass(frozen=True)
class CalibrationTable:
    edges: np.ndarray
    counts: np.ndarray
    mean_pred: np.ndarray  # NaN for empty bins
    frac_pos: np.ndarray
    total: int

    def curve(self) -> list[tuple[float, float]]:
        return [(float(p), float(f)) for p, f, n in zip(self.mean_pred, self.frac_pos, self.counts) if n]

    def rows(self) -> list[dict]:
        return [
            {
                "bin_lo": float(self.edges[i]),
                "bin_hi": float(self.edges[i + 1]),
                "count": int(self.counts[i]),
                "mean_pred": None if not self.counts[i] else float(self.mean_pred[i]),
                "frac_pos": None if not self.counts[i] else float(self.frac_pos[i]),
            }
            for i in range(self.counts.size)
        ]

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count,mean_pred,frac_pos"]
        for r in self.rows():
            mp = "" if r["mean_pred"] is None else repr(r["mean_pred"])
            fp = "" if r["frac_pos"] is None else repr(r["frac_pos"])
            lines.append(f"{r['bin_lo']!r},{r['bin_hi']!r},{r['count']},{mp},{fp}")
        return "\n".join(lines) + "\n"


def bin_index(probs: np.ndarray, n_bins: int = N_BINS) -> np.ndarray:
    """Bins [0, .1), ..., [.9, 1.0]; the last bin is closed so p = 1 is kept."""
    return np.minimum((np.asarray(probs) * n_bins).astype(np.int64), n_bins - 1)


def calibration(probs: Sequence[float], labels: Sequence[int], n_bins: int = N_BINS) -> tuple[CalibrationTable, float]:
    """Equal-width reliability table and the expected calibration error (fraction, not %)."""
    p = np.asarray(probs, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if p.size == 0:
        raise ValueError("calibration needs at least one prediction")
    if np.any((p < 0) | (p > 1)):
        raise ValueError("probabilities must lie in [0, 1]")
    b = bin_index(p, n_bins)
    counts = np.bincount(b, minlength=n_bins)
    sum_p = np.bincount(b, weights=p, minlength=n_bins)
    sum_y = np.bincount(b, weights=y, minlength=n_bins)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean_pred = np.where(counts > 0, sum_p / counts, np.nan)
        frac_pos = np.where(counts > 0, sum_y / counts, np.nan)
    nz = counts > 0
    ece = float(np.sum(counts[nz] / p.size * np.abs(frac_pos[nz] - mean_pred[nz])))
    table = CalibrationTable(np.linspace(0.0, 1.0, n_bins + 1), counts, mean_pred, frac_pos, int(p.size))
    return table, ece


def _pct(v: float) -> float | None:
    return None if math.isnan(v) else 100.0 * v


@dataclass
class MetricsReport:
    level: str
    counts: ConfusionCounts
    rates: Rates
    ece: float
    calibration: CalibrationTable
    threshold: float = 0.5
    coverage: float | None = None

    @classmethod
    def build(cls, probs, labels, level: str, threshold: float = 0.5, counts: ConfusionCounts | None = None):
        table, ece = calibration(probs, labels)
        c = counts if counts is not None else confusion(probs, labels, threshold)
        return cls(level, c, metrics_from_counts(c), ece, table, threshold)

    def to_dict(self) -> dict:
        d = {
            "level": self.level,
            "threshold": self.threshold,
            "accuracy": _pct(self.rates.accuracy),
            "sensitivity": _pct(self.rates.sensitivity),
            "specificity": _pct(self.rates.specificity),
            "macro_f1": _pct(self.rates.macro_f1),
            "ece": 100.0 * self.ece,
            "counts": self.counts.to_dict(),
            "calibration": self.calibration.rows(),
        }
        if self.coverage is not None:
            d["coverage"] = 100.0 * self.coverage
        return d
