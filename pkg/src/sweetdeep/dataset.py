"""Instance table, inter-patient folds, min-max normalization and SMOTE."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

from . import features as F
from .errors import ParameterError, RebalanceError, SchemaError, SplitError

ND, T2D, PD = 0, 1, 2
LABEL_NAMES = {ND: "ND", T2D: "T2D", PD: "PD"}


@dataclass
class InstanceRecord:
    patient_id: str
    timestamp: float
    features: np.ndarray
    label: int

    def to_json(self) -> str:
        return json.dumps(
            {
                "patient_id": self.patient_id,
                "timestamp_s": self.timestamp,
                "label": self.label,
                "features": [float(v) for v in self.features],
            }
        )

    @classmethod
    def from_json(cls, line: str) -> "InstanceRecord":
        try:
            d = json.loads(line)
            feats = np.asarray(d["features"], dtype=np.float64)
            rec = cls(str(d["patient_id"]), float(d["timestamp_s"]), feats, int(d["label"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad instance record: {exc}") from exc
        if feats.shape != (F.N_FEATURES,):
            raise SchemaError(f"instance has {feats.size} features, expected {F.N_FEATURES}")
        if rec.label not in LABEL_NAMES:
            raise SchemaError(f"unknown label {rec.label}")
        return rec


def write_jsonl(records: Iterable[InstanceRecord], path: str | Path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


def read_jsonl(path: str | Path) -> list[InstanceRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                out.append(InstanceRecord.from_json(line))
            except SchemaError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    return out


@dataclass
class InstanceTable:
    """Column-oriented view of a list of instances."""

    patient_ids: np.ndarray
    timestamps: np.ndarray
    X: np.ndarray
    y: np.ndarray

    def __len__(self) -> int:
        return self.y.size

    @classmethod
    def from_records(cls, records: Sequence[InstanceRecord]) -> "InstanceTable":
        if not records:
            return cls(np.array([], dtype=object), np.zeros(0), np.zeros((0, F.N_FEATURES)), np.zeros(0, int))
        return cls(
            np.array([r.patient_id for r in records], dtype=object),
            np.array([r.timestamp for r in records], dtype=np.float64),
            np.vstack([r.features for r in records]).astype(np.float64),
            np.array([r.label for r in records], dtype=np.int64),
        )

    def to_records(self) -> list[InstanceRecord]:
        return [
            InstanceRecord(str(p), float(t), x.copy(), int(lab))
            for p, t, x, lab in zip(self.patient_ids, self.timestamps, self.X, self.y)
        ]

    def subset(self, mask: np.ndarray) -> "InstanceTable":
        return InstanceTable(self.patient_ids[mask], self.timestamps[mask], self.X[mask], self.y[mask])

    def for_patients(self, ids: Iterable[str]) -> "InstanceTable":
        return self.subset(np.isin(self.patient_ids, list(ids)))

    def with_labels(self, labels: Iterable[int]) -> "InstanceTable":
        return self.subset(np.isin(self.y, list(labels)))

    def with_columns(self, cols: np.ndarray) -> "InstanceTable":
        return InstanceTable(self.patient_ids, self.timestamps, self.X[:, cols], self.y)

    def patient_labels(self) -> dict[str, int]:
        return {str(p): int(lab) for p, lab in zip(self.patient_ids, self.y)}


def validate_records(records: Sequence[InstanceRecord]) -> None:
    """Every patient's instances must agree on label, age and family history."""
    seen: dict[str, tuple] = {}
    for r in records:
        key = (r.label, float(r.features[F.AGE_INDEX]), tuple(r.features[F.GROUPS["family_history"]]))
        prev = seen.setdefault(r.patient_id, key)
        if prev != key:
            raise SchemaError(f"patient {r.patient_id} has inconsistent label/age/family history")


@dataclass
class FoldSplit:
    folds: list[list[str]]
    seed: int
    class_counts: list[dict[str, int]] = field(default_factory=list)

    def rotations(self) -> Iterator[tuple[set[str], set[str]]]:
        """(train patients, test patients) for each held-out fold."""
        for k, test in enumerate(self.folds):
            train = {p for j, f in enumerate(self.folds) if j != k for p in f}
            yield train, set(test)

    def to_dict(self) -> dict:
        d = {f"fold_{k}": list(f) for k, f in enumerate(self.folds)}
        d["seed"] = self.seed
        d["class_counts"] = self.class_counts
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "FoldSplit":
        try:
            n = sum(1 for k in d if k.startswith("fold_"))
            folds = [[str(p) for p in d[f"fold_{k}"]] for k in range(n)]
            return cls(folds, int(d["seed"]), list(d.get("class_counts", [])))
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"bad fold file: {exc}") from exc

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path: str | Path) -> "FoldSplit":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{path}: {exc}") from exc


def make_folds(records: Sequence[InstanceRecord] | InstanceTable, seed: int, n_folds: int = 3) -> FoldSplit:
    """Deal shuffled patients of each class round-robin into ``n_folds`` folds.

    The deal counter runs on across classes, which keeps both the per-class
    and the total fold sizes within one patient of each other. PD patients
    are ignored.
    """
    table = records if isinstance(records, InstanceTable) else InstanceTable.from_records(records)
    labels = table.patient_labels()
    by_class = {c: sorted(p for p, lab in labels.items() if lab == c) for c in (ND, T2D)}
    for c, ids in by_class.items():
        if len(ids) < n_folds:
            raise SplitError(f"class {LABEL_NAMES[c]} has {len(ids)} patients, need at least {n_folds}")
    rng = np.random.default_rng(seed)
    folds: list[list[str]] = [[] for _ in range(n_folds)]
    counts = [{"ND": 0, "T2D": 0} for _ in range(n_folds)]
    slot = 0
    for c in (ND, T2D):
        for pid in rng.permutation(np.array(by_class[c], dtype=object)):
            folds[slot % n_folds].append(str(pid))
            counts[slot % n_folds][LABEL_NAMES[c]] += 1
            slot += 1
    return FoldSplit([sorted(f) for f in folds], seed, counts)


@dataclass
class Normalizer:
    """Per-column min-max scaling; ``passthrough`` columns are left as is."""

    mins: np.ndarray
    maxs: np.ndarray
    passthrough: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        rng = self.maxs - self.mins
        safe = np.where(rng > 0, rng, 1.0)
        out = np.where(rng > 0, (X - self.mins) / safe, 0.0)
        return np.where(self.passthrough, X, out)

    def to_dict(self) -> dict:
        return {
            "mins": self.mins.tolist(),
            "maxs": self.maxs.tolist(),
            "passthrough": self.passthrough.astype(bool).tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.asarray(d["mins"], float), np.asarray(d["maxs"], float), np.asarray(d["passthrough"], bool))


def time_passthrough(columns: np.ndarray | None = None) -> np.ndarray:
    cols = np.arange(F.N_FEATURES) if columns is None else np.asarray(columns)
    return (cols >= F.TIME_SLICE.start) & (cols < F.TIME_SLICE.stop)


def fit_normalizer(train: InstanceTable | np.ndarray, passthrough: np.ndarray | None = None) -> Normalizer:
    X = train.X if isinstance(train, InstanceTable) else np.asarray(train, dtype=np.float64)
    if X.shape[0] == 0:
        raise ParameterError("cannot fit a normalizer on an empty training set")
    if passthrough is None:
        if X.shape[1] != F.N_FEATURES:
            raise ParameterError("passthrough mask required for non-standard column sets")
        passthrough = time_passthrough()
    mins, maxs = X.min(axis=0), X.max(axis=0)
    return Normalizer(np.where(passthrough, 0.0, mins), np.where(passthrough, 0.0, maxs), np.asarray(passthrough, bool))


def apply_normalizer(n: Normalizer, instances: InstanceTable) -> InstanceTable:
    return InstanceTable(instances.patient_ids, instances.timestamps, n.apply(instances.X), instances.y)


def _knn(X: np.ndarray, k: int) -> np.ndarray:
    sq = np.einsum("ij,ij->i", X, X)
    d2 = sq[:, None] + sq[None, :] - 2.0 * X @ X.T
    np.fill_diagonal(d2, np.inf)
    return np.argsort(d2, axis=1, kind="stable")[:, :k]


def smote_rebalance(train: InstanceTable, k: int = 5, seed: int = 0, return_parents: bool = False):
    """Oversample the minority class up to the majority count.

    New rows are ``x + lam * (x_nn - x)`` with ``lam ~ U[0, 1]`` and
    ``x_nn`` one of the ``k`` nearest minority neighbours of ``x``. All
    columns are interpolated, one-hot ones included.

    With ``return_parents`` the result is ``(table, parents)`` where
    ``parents[i]`` holds the row indices in ``train`` of the two instances
    that synthetic row ``i`` was interpolated between.
    """
    classes, counts = np.unique(train.y, return_counts=True)
    if classes.size < 2 or counts[0] == counts[1]:
        return (train, np.zeros((0, 2), dtype=np.int64)) if return_parents else train
    if classes.size > 2:
        raise RebalanceError("SMOTE expects exactly two classes")
    minority = classes[np.argmin(counts)]
    n_new = int(counts.max() - counts.min())
    idx = np.flatnonzero(train.y == minority)
    if idx.size < k + 1:
        raise RebalanceError(f"minority class has {idx.size} instances, need at least k+1={k + 1}")
    Xm = train.X[idx]
    nn = _knn(Xm, k)
    rng = np.random.default_rng(seed)
    base = rng.integers(idx.size, size=n_new)
    partner = nn[base, rng.integers(k, size=n_new)]
    lam = rng.random(n_new)[:, None]
    X_new = Xm[base] + lam * (Xm[partner] - Xm[base])
    ids_new = np.array([f"smote-{i:06d}" for i in range(n_new)], dtype=object)
    out = InstanceTable(
        np.concatenate([train.patient_ids, ids_new]),
        np.concatenate([train.timestamps, train.timestamps[idx][base]]),
        np.vstack([train.X, X_new]),
        np.concatenate([train.y, np.full(n_new, minority, dtype=train.y.dtype)]),
    )
    if return_parents:
        return out, np.column_stack([idx[base], idx[partner]])
    return out
