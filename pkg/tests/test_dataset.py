import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sweetdeep import features as F
from sweetdeep.dataset import (
    ND,
    T2D,
    FoldSplit,
    InstanceRecord,
    InstanceTable,
    apply_normalizer,
    fit_normalizer,
    make_folds,
    read_jsonl,
    smote_rebalance,
    validate_records,
    write_jsonl,
)
from sweetdeep.errors import RebalanceError, SchemaError, SplitError
from sweetdeep.model import ModelConfig
from sweetdeep.pipeline import fit_model


def toy_table(n_nd, n_t2d, per_patient=1, rng=None, d=F.N_FEATURES):
    rng = rng or np.random.default_rng(0)
    ids, y = [], []
    for label, n, prefix in ((ND, n_nd, "nd"), (T2D, n_t2d, "t2d")):
        for i in range(n):
            ids += [f"{prefix}-{i}"] * per_patient
            y += [label] * per_patient
    m = len(y)
    return InstanceTable(np.array(ids, dtype=object), np.arange(m, dtype=float), rng.normal(size=(m, d)), np.array(y))


def test_default_folds_are_95_95_95(default_folds):
    sizes = [len(f) for f in default_folds.folds]
    assert sizes == [95, 95, 95]
    for c in default_folds.class_counts:
        assert c["ND"] == 54 and c["T2D"] == 41


def test_folds_partition_patients(default_folds):
    seen = [p for f in default_folds.folds for p in f]
    assert len(seen) == len(set(seen)) == 285
    for train, test in default_folds.rotations():
        assert not train & test
        assert len(train) + len(test) == 285


def test_tiny_fold_split():
    folds = make_folds(toy_table(3, 3), seed=1)
    for f in folds.folds:
        assert sum(p.startswith("nd") for p in f) == 1
        assert sum(p.startswith("t2d") for p in f) == 1


def test_folds_deterministic():
    t = toy_table(20, 14)
    assert make_folds(t, 5).folds == make_folds(t, 5).folds
    assert make_folds(t, 5).folds != make_folds(t, 6).folds


@settings(max_examples=40, deadline=None)
@given(st.integers(3, 40), st.integers(3, 40), st.integers(0, 1000))
def test_fold_balance_property(n_nd, n_t2d, seed):
    folds = make_folds(toy_table(n_nd, n_t2d), seed)
    sizes = [len(f) for f in folds.folds]
    assert max(sizes) - min(sizes) <= 1
    for cls in ("ND", "T2D"):
        per = [c[cls] for c in folds.class_counts]
        assert max(per) - min(per) <= 1


def test_too_few_patients():
    with pytest.raises(SplitError):
        make_folds(toy_table(2, 5), seed=0)


def test_fold_file_round_trip(tmp_path, default_folds):
    path = tmp_path / "folds.json"
    default_folds.save(path)
    d = json.loads(path.read_text())
    assert set(d) >= {"fold_0", "fold_1", "fold_2", "seed"}
    back = FoldSplit.load(path)
    assert back.folds == default_folds.folds and back.seed == default_folds.seed
    path.write_text("{")
    with pytest.raises(SchemaError):
        FoldSplit.load(path)


def test_normalizer_examples():
    X = np.zeros((2, F.N_FEATURES))
    X[:, 0] = [2.0, 4.0]
    X[:, 1] = [7.0, 7.0]
    n = fit_normalizer(X)
    test = np.zeros((2, F.N_FEATURES))
    test[:, 0] = [3.0, 5.0]
    test[:, 1] = [7.0, -100.0]
    out = n.apply(test)
    assert out[0, 0] == 0.5 and out[1, 0] == 1.5
    assert out[0, 1] == 0.0 and out[1, 1] == 0.0


def test_time_columns_pass_through(default_table):
    n = fit_normalizer(default_table)
    out = n.apply(default_table.X)
    assert np.array_equal(out[:, F.TIME_SLICE], default_table.X[:, F.TIME_SLICE])
    assert np.allclose(out[:, F.NON_TIME].min(axis=0), 0.0)


def test_normalizer_sees_training_patients_only(default_table, default_folds):
    train_ids, test_ids = next(default_folds.rotations())
    train = default_table.for_patients(train_ids)
    fitted = fit_model(train, ModelConfig(epochs=0))
    lab = train.with_labels([ND, T2D])
    cols = F.NON_TIME
    assert np.array_equal(fitted.params.normalizer.mins[cols], lab.X[:, cols].min(axis=0))
    assert np.array_equal(fitted.params.normalizer.maxs[cols], lab.X[:, cols].max(axis=0))
    # negative control: statistics over all patients differ, so a leak would be visible
    everyone = default_table.with_labels([ND, T2D]).X[:, cols]
    assert not np.array_equal(everyone.min(axis=0), lab.X[:, cols].min(axis=0))


def test_smote_equalizes_counts():
    t = toy_table(300, 200)
    out = smote_rebalance(t, k=5, seed=0)
    assert np.sum(out.y == ND) == 300 and np.sum(out.y == T2D) == 300


def test_smote_noop_on_balanced_input():
    t = toy_table(50, 50)
    out = smote_rebalance(t, seed=1)
    assert out is t


@settings(max_examples=30, deadline=None)
@given(st.integers(6, 40), st.integers(41, 90), st.integers(0, 10_000))
def test_smote_points_lie_between_parents(n_min, n_maj, seed):
    t = toy_table(n_maj, n_min, rng=np.random.default_rng(seed), d=6)
    out, parents = smote_rebalance(t, k=5, seed=seed, return_parents=True)
    new = out.X[len(t):]
    a, b = t.X[parents[:, 0]], t.X[parents[:, 1]]
    assert np.all(t.y[parents] == T2D)
    lo, hi = np.minimum(a, b) - 1e-9, np.maximum(a, b) + 1e-9
    assert np.all((new >= lo) & (new <= hi))
    # a single scalar lambda per row: the offset is collinear with b - a
    lam = np.einsum("ij,ij->i", new - a, b - a) / np.maximum(np.einsum("ij,ij->i", b - a, b - a), 1e-300)
    assert np.allclose(a + lam[:, None] * (b - a), new, atol=1e-9)


def test_smote_deterministic():
    t = toy_table(80, 30)
    a, b = smote_rebalance(t, seed=4), smote_rebalance(t, seed=4)
    assert np.array_equal(a.X, b.X)


def test_smote_needs_enough_minority():
    with pytest.raises(RebalanceError):
        smote_rebalance(toy_table(20, 5), k=5)


def test_jsonl_round_trip(tmp_path, small_records):
    path = tmp_path / "c.jsonl"
    write_jsonl(small_records, path)
    back = read_jsonl(path)
    assert len(back) == len(small_records)
    for a, b in zip(back, small_records):
        assert a.patient_id == b.patient_id and a.label == b.label and a.timestamp == b.timestamp
        assert np.array_equal(a.features, b.features)
    first = json.loads(path.read_text().splitlines()[0])
    assert set(first) == {"patient_id", "timestamp_s", "label", "features"}


@pytest.mark.parametrize(
    "line",
    [
        "not json",
        '{"patient_id": "a", "timestamp_s": 0, "label": 0}',
        '{"patient_id": "a", "timestamp_s": 0, "label": 0, "features": [1, 2]}',
        '{"patient_id": "a", "timestamp_s": 0, "label": 7, "features": ' + json.dumps([0] * 35) + "}",
    ],
)
def test_bad_jsonl_lines(tmp_path, line):
    path = tmp_path / "bad.jsonl"
    path.write_text(line + "\n")
    with pytest.raises(SchemaError):
        read_jsonl(path)


def test_inconsistent_patient_rejected(small_records):
    a = small_records[0]
    b = InstanceRecord(a.patient_id, a.timestamp + 1, a.features.copy(), a.label)
    b.features[F.AGE_INDEX] += 1
    with pytest.raises(SchemaError):
        validate_records([a, b])
    validate_records(small_records)
