"""Patient-level aggregation, verdicts with optional abstention, cohort distributions."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AggregationError

HALF_WIDTH = 0.08
# Decimal edges such as 0.58 sit a few ulps inside the band in binary
# (0.58 - 0.5 == 0.07999999999999996); distances within BAND_TOL of the
# edge count as on the edge, which is outside the open band.
BAND_TOL = 1e-12
ND_VERDICT, T2D_VERDICT, DONT_KNOW = "ND", "T2D", "DontKnow"


def aggregate_patient(instance_preds: Sequence[float]) -> float:
    """Arithmetic mean of a patient's instance-level T2D probabilities."""
    p = np.asarray(instance_preds, dtype=np.float64)
    if p.size == 0:
        raise AggregationError("patient has no instance predictions")
    return math.fsum(p.tolist()) / p.size


@dataclass(frozen=True)
class PatientVerdict:
    patient_id: str
    p_t2d: float
    n_instances: int
    verdict: str
    threshold: float = 0.5
    label: int | None = None

    @property
    def abstained(self) -> bool:
        return self.verdict == DONT_KNOW


def in_band(p: float, half_width: float = HALF_WIDTH) -> bool:
    return abs(p - 0.5) < half_width - BAND_TOL


def verdict(
    p: float,
    threshold: float = 0.5,
    abstain: bool = False,
    half_width: float = HALF_WIDTH,
    patient_id: str = "",
    n_instances: int = 0,
    label: int | None = None,
) -> PatientVerdict:
    """``DontKnow`` inside the open band ``|p - 0.5| < half_width``, else threshold at ``>=``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability {p} outside [0, 1]")
    if abstain and in_band(p, half_width):
        v = DONT_KNOW
    else:
        v = T2D_VERDICT if p >= threshold else ND_VERDICT
    return PatientVerdict(patient_id, p, n_instances, v, threshold, label)


def patient_probabilities(
    patient_ids: Sequence[str], probs: Sequence[float], labels: Sequence[int] | None = None
) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
    """Group instance predictions by patient: (ids, mean prob, n instances, label)."""
    ids = np.asarray(patient_ids, dtype=object)
    p = np.asarray(probs, dtype=np.float64)
    lab = np.full(ids.size, -1) if labels is None else np.asarray(labels)
    order = sorted(set(ids.tolist()))
    out_p, out_n, out_y = [], [], []
    for pid in order:
        m = ids == pid
        out_p.append(aggregate_patient(p[m]))
        out_n.append(int(m.sum()))
        out_y.append(int(lab[m][0]))
    return order, np.array(out_p), np.array(out_n), np.array(out_y)


def screen_patients(
    patient_ids, probs, labels=None, threshold: float = 0.5, abstain: bool = False, half_width: float = HALF_WIDTH
) -> list[PatientVerdict]:
    ids, p, n, y = patient_probabilities(patient_ids, probs, labels)
    return [
        verdict(float(pi), threshold, abstain, half_width, pid, int(ni), None if yi < 0 else int(yi))
        for pid, pi, ni, yi in zip(ids, p, n, y)
    ]


@dataclass
class AbstentionReport:
    coverage: float
    abstained_fraction: float
    n_total: int
    n_retained: int
    metrics: "object | None"  # MetricsReport over retained patients, None if nobody is retained
    half_width: float

    def to_dict(self) -> dict:
        d = {
            "coverage": 100.0 * self.coverage,
            "abstained": 100.0 * self.abstained_fraction,
            "n_total": self.n_total,
            "n_retained": self.n_retained,
            "half_width": self.half_width,
            "note": "metrics cover retained patients only; not comparable with full-coverage results",
            "metrics": None if self.metrics is None else self.metrics.to_dict(),
        }
        return d


def abstention_report(verdicts: Sequence[PatientVerdict], half_width: float = HALF_WIDTH) -> AbstentionReport:
    from .evaluation import MetricsReport

    total = len(verdicts)
    kept = [v for v in verdicts if not v.abstained]
    cov = len(kept) / total if total else 0.0
    metrics = None
    if kept:
        if any(v.label is None for v in kept):
            raise ValueError("abstention metrics need labelled verdicts")
        thr = kept[0].threshold
        metrics = MetricsReport.build([v.p_t2d for v in kept], [v.label for v in kept], "patient", thr)
        metrics.coverage = cov
    return AbstentionReport(cov, 1.0 - cov if total else 0.0, total, len(kept), metrics, half_width)


def tune_half_width(patient_probs: Sequence[float], max_abstain: float = 0.10, step: float = 0.005) -> float:
    """Largest half-width (on a ``step`` grid) that abstains on at most ``max_abstain`` of patients."""
    p = np.asarray(patient_probs, dtype=np.float64)
    dist = np.abs(p - 0.5)
    best = 0.0
    for k in range(1, int(round(0.5 / step)) + 1):
        hw = k * step
        if np.mean(dist < hw - BAND_TOL) <= max_abstain:
            best = hw
        else:
            break
    return best


@dataclass
class CohortDistribution:
    cohort: str
    probs: np.ndarray
    edges: np.ndarray
    counts: np.ndarray

    def to_csv(self) -> str:
        lines = ["bin_lo,bin_hi,count"]
        for i, c in enumerate(self.counts):
            lines.append(f"{float(self.edges[i])!r},{float(self.edges[i + 1])!r},{int(c)}")
        return "\n".join(lines) + "\n"

    def mode_bin(self) -> tuple[float, float]:
        i = int(np.argmax(self.counts))
        return float(self.edges[i]), float(self.edges[i + 1])


def distribution(cohort: str, patient_probs: Sequence[float], n_bins: int = 10) -> CohortDistribution:
    from .evaluation import bin_index

    p = np.asarray(patient_probs, dtype=np.float64)
    counts = np.bincount(bin_index(p, n_bins), minlength=n_bins) if p.size else np.zeros(n_bins, int)
    return CohortDistribution(cohort, p, np.linspace(0, 1, n_bins + 1), counts)


def cohort_distribution(params, table, label: int, cohort: str | None = None, n_bins: int = 10) -> CohortDistribution:
    """Histogram of patient-level probabilities for one labelled cohort under a trained model."""
    from .dataset import LABEL_NAMES
    from .model import predict_t2d

    sub = table.with_labels([label])
    probs = predict_t2d(params, sub.X) if len(sub) else np.zeros(0)
    _, p, _, _ = patient_probabilities(sub.patient_ids, probs)
    return distribution(cohort or LABEL_NAMES[label], p, n_bins)
