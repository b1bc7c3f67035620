"""Cross-validated variant matrix: architecture ablations, size variants,
feature-group ablations and decision-threshold variants."""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from . import features as F
from .dataset import FoldSplit, InstanceTable
from .errors import ConfigError
from .evaluation import MetricsReport
from .model import SIZE_VARIANTS, ModelConfig, count_params
from .pipeline import CvResult, cross_validate


@dataclass(frozen=True)
class Variant:
    name: str
    category: str
    dropped_groups: tuple[str, ...] = ()
    layer_widths: tuple[int, ...] | None = None
    batchnorm: bool | None = None
    dropout: bool | None = None
    threshold: float | None = None  # threshold variants reuse the baseline predictions


VARIANTS: dict[str, Variant] = {
    v.name: v
    for v in [
        Variant("baseline", "none"),
        Variant("no-dropout", "architectural", dropout=False),
        Variant("no-batchnorm", "architectural", batchnorm=False),
        Variant("no-do-no-bn", "architectural", batchnorm=False, dropout=False),
        Variant("wider", "model-size", layer_widths=SIZE_VARIANTS["wider"]),
        Variant("deeper", "model-size", layer_widths=SIZE_VARIANTS["deeper"]),
        Variant("wider-deeper", "model-size", layer_widths=SIZE_VARIANTS["wider-deeper"]),
        Variant("no-ppg-bp", "feature", dropped_groups=("ppg_bp",)),
        Variant("no-family-history", "feature", dropped_groups=("family_history",)),
        Variant("no-ecg", "feature", dropped_groups=("ecg",)),
        Variant("no-time", "feature", dropped_groups=("time",)),
        Variant("no-bia", "feature", dropped_groups=("bia",)),
        Variant("no-age", "feature", dropped_groups=("age",)),
        Variant("threshold-0.4", "threshold", threshold=0.4),
        Variant("threshold-0.6", "threshold", threshold=0.6),
    ]
}


def resolve(names: Iterable[str]) -> list[Variant]:
    out = []
    for n in names:
        if n not in VARIANTS:
            raise ConfigError(f"unknown variant {n!r}; known: {', '.join(VARIANTS)}")
        out.append(VARIANTS[n])
    return out


def variant_config(v: Variant, base: ModelConfig) -> tuple[ModelConfig, np.ndarray]:
    cols = F.group_columns(v.dropped_groups)
    cfg = base
    if v.layer_widths is not None:
        cfg = replace(cfg, layer_widths=v.layer_widths)
    if v.batchnorm is not None:
        cfg = replace(cfg, batchnorm=v.batchnorm)
    if v.dropout is not None:
        cfg = replace(cfg, dropout=v.dropout)
    return cfg.with_input_width(cols.size), cols


@dataclass
class VariantResult:
    variant: Variant
    input_width: int
    n_params: int
    instance: MetricsReport
    patient: MetricsReport
    cv: CvResult

    def to_dict(self) -> dict:
        return {
            "variant": self.variant.name,
            "category": self.variant.category,
            "input_width": self.input_width,
            "n_params": self.n_params,
            "instance": self.instance.to_dict(),
            "patient": self.patient.to_dict(),
        }


def run_experiment(
    table: InstanceTable,
    folds: FoldSplit,
    variants: Sequence[str] | Sequence[Variant] = tuple(VARIANTS),
    base: ModelConfig = ModelConfig(),
    smote_k: int = 5,
    seed: int = 0,
) -> list[VariantResult]:
    """Full 3-fold cross-validation per variant on one shared fold assignment."""
    todo = [VARIANTS[v] if isinstance(v, str) and v in VARIANTS else v for v in variants]
    for v in todo:
        if not isinstance(v, Variant):
            raise ConfigError(f"unknown variant {v!r}; known: {', '.join(VARIANTS)}")
    results: list[VariantResult] = []
    baseline_cv: CvResult | None = None
    for v in todo:
        cfg, cols = variant_config(v, base)
        if v.threshold is not None:
            if baseline_cv is None:
                baseline_cv = cross_validate(table, folds, base, None, smote_k, seed, "baseline")
            cv, thr = baseline_cv, v.threshold
        else:
            cv = cross_validate(table, folds, cfg, cols, smote_k, seed, v.name)
            thr = 0.5
            if v.name == "baseline":
                baseline_cv = cv
        results.append(
            VariantResult(v, int(cols.size), count_params(cfg), cv.instance_report(thr), cv.patient_report(thr), cv)
        )
    return results


def results_to_json(results: Sequence[VariantResult]) -> str:
    return json.dumps({"variants": [r.to_dict() for r in results]}, indent=2, sort_keys=True) + "\n"
