import math
from dataclasses import replace

import numpy as np
import pytest

from sweetdeep.errors import ModelLoadError, ParameterError, TrainingError
from sweetdeep.model import (
    SIZE_VARIANTS,
    Adam,
    AdamConfig,
    ModelConfig,
    count_params,
    cross_entropy,
    forward,
    init_params,
    load_params,
    loss_and_grads,
    predict_one,
    predict_proba,
    save_params,
    train,
    train_loss,
)


def toy_separable(n=2000, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.random((n, 35)) * 0.05
    a, b = rng.random(n), rng.random(n)
    y = (a + b > 1.0).astype(int)
    margin = np.abs(a + b - 1.0) > 0.04
    X[:, 0], X[:, 1] = a, b
    return X[margin], y[margin]


def test_parameter_counts():
    assert count_params(ModelConfig()) == 2986
    assert count_params(ModelConfig(batchnorm=False)) == 2842
    assert count_params(ModelConfig(layer_widths=(35, 2), batchnorm=False)) == 72
    assert count_params(ModelConfig(layer_widths=SIZE_VARIANTS["wider"])) == 35 * 128 + 128 + 256 + 128 * 16 + 16 + 32 + 34


def test_initialized_tensors_match_count(rng):
    for widths in SIZE_VARIANTS.values():
        cfg = ModelConfig(layer_widths=widths)
        p = init_params(cfg, rng)
        assert sum(t.size for _, t in p.tensors()) == count_params(cfg)


def test_config_validation():
    with pytest.raises(ParameterError):
        ModelConfig(layer_widths=(35, 64, 3)).validate()
    with pytest.raises(ParameterError):
        ModelConfig(dropout_p=1.0).validate()
    with pytest.raises(ParameterError):
        ModelConfig(layer_widths=(35,)).validate()


def test_probabilities_sum_to_one(rng):
    p = init_params(ModelConfig(), rng)
    probs = predict_proba(p, rng.normal(size=(64, 35)) * 5)
    assert np.allclose(probs.sum(axis=1), 1.0, atol=1e-9)


def test_train_and_eval_agree_when_stats_match(rng):
    p = init_params(ModelConfig(dropout_p=0.0), rng)
    X = rng.random((128, 35))
    train_probs, cache = forward(p, X, "train", rng=rng)
    for L, mu, var in zip(p.layers, cache.batch_mean, cache.batch_var):
        if L.has_bn:
            L.running_mean, L.running_var = mu.copy(), var.copy()
    eval_probs, _ = forward(p, X, "eval")
    assert np.allclose(train_probs, eval_probs, atol=1e-9)


def test_zero_output_layer_is_uniform(rng):
    p = init_params(ModelConfig(), rng)
    p.layers[-1].W[:] = 0
    p.layers[-1].b[:] = 0
    pred = predict_one(p, rng.random(35))
    assert pred.p_nd == 0.5 and pred.p_t2d == 0.5
    assert pred.hard_label() == 1  # ties go to T2D


def test_forward_leaves_running_stats_alone(rng):
    p = init_params(ModelConfig(), rng)
    before = [L.running_mean.copy() for L in p.layers[:-1]]
    forward(p, rng.random((32, 35)), "train", rng=rng)
    assert all(np.array_equal(a, L.running_mean) for a, L in zip(before, p.layers[:-1]))


def test_forward_rejects_wrong_width(rng):
    p = init_params(ModelConfig(), rng)
    with pytest.raises(ParameterError):
        forward(p, rng.random((4, 27)))
    with pytest.raises(ParameterError):
        forward(p, rng.random((4, 35)), "test")


def test_initial_loss_near_ln2():
    X, y = toy_separable()
    idx = np.concatenate([np.flatnonzero(y == 0)[:256], np.flatnonzero(y == 1)[:256]])
    p = init_params(ModelConfig(), np.random.default_rng(0))
    loss = train_loss(p, X[idx], y[idx])
    assert abs(loss - math.log(2)) <= 0.2


def test_separable_toy_is_learned():
    X, y = toy_separable()
    _, hist = train(ModelConfig(epochs=50, batch_size=64), X, y)
    assert hist[-1].accuracy >= 0.99


def test_training_is_bit_reproducible():
    X, y = toy_separable(600)
    cfg = ModelConfig(epochs=5, batch_size=100, seed=9)
    a, ha = train(cfg, X, y)
    b, hb = train(cfg, X, y)
    for (_, ta), (_, tb) in zip(a.tensors(), b.tensors()):
        assert np.array_equal(ta, tb)
    assert all(np.array_equal(x.running_var, z.running_var) for x, z in zip(a.layers[:-1], b.layers[:-1]))
    assert [h.loss for h in ha] == [h.loss for h in hb]
    c, _ = train(replace(cfg, seed=10), X, y)
    assert not np.array_equal(a.layers[0].W, c.layers[0].W)


def test_training_errors():
    with pytest.raises(TrainingError):
        train(ModelConfig(), np.zeros((0, 35)), np.zeros(0, int))
    with pytest.raises(TrainingError):
        train(ModelConfig(), np.zeros((4, 30)), np.zeros(4, int))


def test_short_last_batch_is_used():
    X, y = toy_separable(300)
    _, hist = train(ModelConfig(epochs=1, batch_size=256), X, y)
    assert len(hist) == 1 and np.isfinite(hist[0].loss)


def test_adam_first_step_is_lr(rng):
    w = rng.normal(size=5)
    g = rng.normal(size=5)
    start = w.copy()
    Adam([w], AdamConfig(lr=0.01)).step([w], [g])
    assert np.allclose(start - w, 0.01 * np.sign(g), rtol=1e-6)


def test_gradients_without_batchnorm(rng):
    cfg = ModelConfig(layer_widths=(35, 16, 2), batchnorm=False)
    p = init_params(cfg, rng)
    X, y = rng.random((64, 35)), rng.integers(0, 2, 64)
    _, grads = loss_and_grads(p, X, y)
    h = 1e-6
    for i, L in enumerate(p.layers):
        for k in L.trainable():
            A = getattr(L, k)
            for flat in rng.choice(A.size, size=min(10, A.size), replace=False):
                ix = np.unravel_index(flat, A.shape)
                old = A[ix]
                A[ix] = old + h
                lp = train_loss(p, X, y)
                A[ix] = old - h
                lm = train_loss(p, X, y)
                A[ix] = old
                num = (lp - lm) / (2 * h)
                assert abs(num - grads[i][k][ix]) <= 1e-6 * max(1.0, abs(num))


def test_cross_entropy_is_stable():
    logits = np.array([[1000.0, 0.0], [0.0, 1000.0]])
    assert cross_entropy(logits, np.array([0, 1])) == pytest.approx(0.0, abs=1e-12)
    assert np.isfinite(cross_entropy(logits, np.array([1, 0])))


def trained_small():
    X, y = toy_separable(400)
    p, _ = train(ModelConfig(epochs=2, batch_size=128), X, y)
    return p, X


def test_save_load_save_is_byte_identical(tmp_path):
    p, X = trained_small()
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    save_params(p, a)
    q = load_params(a, ModelConfig())
    save_params(q, b)
    assert a.read_bytes() == b.read_bytes()
    assert np.array_equal(predict_proba(p, X), predict_proba(q, X))


def test_truncated_file_is_corrupt(tmp_path):
    p, _ = trained_small()
    path = tmp_path / "w.json"
    save_params(p, path)
    path.write_bytes(path.read_bytes()[:-200])
    with pytest.raises(ModelLoadError):
        load_params(path)


def test_shape_mismatch_detected(tmp_path, rng):
    path = tmp_path / "wide.json"
    save_params(init_params(ModelConfig(layer_widths=SIZE_VARIANTS["wider"]), rng), path)
    with pytest.raises(ModelLoadError):
        load_params(path, ModelConfig())
    assert load_params(path).config.layer_widths == SIZE_VARIANTS["wider"]


def test_foreign_json_rejected(tmp_path):
    path = tmp_path / "x.json"
    path.write_text('{"format": "other"}')
    with pytest.raises(ModelLoadError):
        load_params(path)


def test_float32_matches_float64():
    p, X = trained_small()
    p64 = predict_proba(p, X)
    p32 = predict_proba(p, X, dtype=np.float32)
    assert np.max(np.abs(p64 - p32)) < 1e-4
