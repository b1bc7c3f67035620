"""Fold-wise training and prediction: normalize -> SMOTE -> train -> predict."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import screen
from .dataset import ND, T2D, FoldSplit, InstanceTable, apply_normalizer, fit_normalizer, smote_rebalance, time_passthrough
from .evaluation import MetricsReport, confusion, pooled_counts
from .model import EpochStats, ModelConfig, ModelParams, predict_t2d, train
from .seeds import derive_seed


@dataclass
class FittedModel:
    params: ModelParams
    history: list[EpochStats]


def fit_model(
    train_table: InstanceTable,
    config: ModelConfig,
    columns: np.ndarray | None = None,
    smote_k: int = 5,
    smote_seed: int = 0,
) -> FittedModel:
    """Fit scaling on ``train_table`` only, rebalance, train; the scaling travels with the weights."""
    cols = np.arange(train_table.X.shape[1]) if columns is None else np.asarray(columns)
    sub = train_table.with_labels([ND, T2D]).with_columns(cols)
    norm = fit_normalizer(sub, passthrough=time_passthrough(cols))
    balanced = smote_rebalance(apply_normalizer(norm, sub), k=smote_k, seed=smote_seed)
    params, history = train(config.with_input_width(cols.size), balanced.X, balanced.y)
    params.normalizer = norm
    params.columns = cols
    return FittedModel(params, history)


def fold_seeds(seed: int, stream: str, fold) -> tuple[int, int]:
    """(model seed, SMOTE seed) for one fold of one variant stream."""
    return derive_seed(seed, stream, "model", fold), derive_seed(seed, stream, "smote", fold)


def fit_fold(
    train_table: InstanceTable,
    config: ModelConfig,
    columns: np.ndarray | None,
    smote_k: int,
    seed: int,
    stream: str,
    fold,
) -> FittedModel:
    model_seed, smote_seed = fold_seeds(seed, stream, fold)
    return fit_model(train_table, replace(config, seed=model_seed), columns, smote_k, smote_seed)


@dataclass
class CvResult:
    """Pooled out-of-fold instance predictions of one cross-validation run."""

    patient_ids: np.ndarray
    labels: np.ndarray
    probs: np.ndarray
    fold: np.ndarray
    models: list[FittedModel] = field(default_factory=list)

    def instance_report(self, threshold: float = 0.5) -> MetricsReport:
        counts = pooled_counts(
            confusion(self.probs[self.fold == k], self.labels[self.fold == k], threshold) for k in np.unique(self.fold)
        )
        return MetricsReport.build(self.probs, self.labels, "instance", threshold, counts)

    def patient_table(self) -> tuple[list[str], np.ndarray, np.ndarray, np.ndarray]:
        return screen.patient_probabilities(self.patient_ids, self.probs, self.labels)

    def patient_report(self, threshold: float = 0.5) -> MetricsReport:
        _, p, _, y = self.patient_table()
        return MetricsReport.build(p, y, "patient", threshold)

    def verdicts(self, threshold: float = 0.5, abstain: bool = False, half_width: float = screen.HALF_WIDTH):
        return screen.screen_patients(self.patient_ids, self.probs, self.labels, threshold, abstain, half_width)


def cross_validate(
    table: InstanceTable,
    folds: FoldSplit,
    config: ModelConfig,
    columns: np.ndarray | None = None,
    smote_k: int = 5,
    seed: int = 0,
    stream: str = "baseline",
) -> CvResult:
    """Train one model per held-out fold and collect its test predictions.

    Model and SMOTE seeds come from ``(seed, stream, fold)``, so variants
    sharing the fold file still own independent random streams.
    """
    table = table.with_labels([ND, T2D])
    ids, labels, probs, fold_of = [], [], [], []
    models = []
    for k, (train_ids, test_ids) in enumerate(folds.rotations()):
        fitted = fit_fold(table.for_patients(train_ids), config, columns, smote_k, seed, stream, k)
        test = table.for_patients(test_ids)
        ids.append(test.patient_ids)
        labels.append(test.y)
        probs.append(predict_t2d(fitted.params, test.X))
        fold_of.append(np.full(len(test), k))
        models.append(fitted)
    return CvResult(
        np.concatenate(ids), np.concatenate(labels), np.concatenate(probs), np.concatenate(fold_of), models
    )


def predict_folds(table: InstanceTable, folds: FoldSplit, models: list[ModelParams]) -> CvResult:
    """Out-of-fold predictions from already trained per-fold models."""
    if len(models) != len(folds.folds):
        raise ValueError(f"{len(models)} models for {len(folds.folds)} folds")
    table = table.with_labels([ND, T2D])
    ids, labels, probs, fold_of = [], [], [], []
    for k, (_, test_ids) in enumerate(folds.rotations()):
        test = table.for_patients(test_ids)
        ids.append(test.patient_ids)
        labels.append(test.y)
        probs.append(predict_t2d(models[k], test.X))
        fold_of.append(np.full(len(test), k))
    return CvResult(np.concatenate(ids), np.concatenate(labels), np.concatenate(probs), np.concatenate(fold_of))
