"""Compact fully connected classifier trained with backprop and Adam (numpy, float64).

Hidden layers are Linear -> BatchNorm1d -> ReLU -> Dropout; the output layer
is Linear -> softmax over (ND, T2D).
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dataset import Normalizer
from .errors import ModelLoadError, ParameterError, TrainingError

FORMAT_NAME = "sweetdeep-weights"
FORMAT_VERSION = 1

BASELINE_WIDTHS = (35, 64, 8, 2)
OUTPUT_INIT_SCALE = 0.1
SIZE_VARIANTS = {
    "baseline": BASELINE_WIDTHS,
    "wider": (35, 128, 16, 2),
    "deeper": (35, 64, 64, 8, 2),
    "wider-deeper": (35, 128, 128, 16, 2),
}


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class ModelConfig:
    layer_widths: tuple[int, ...] = BASELINE_WIDTHS
    dropout_p: float = 0.1
    batchnorm: bool = True
    dropout: bool = True
    epochs: int = 50
    batch_size: int = 512
    adam: AdamConfig = AdamConfig()
    bn_eps: float = 1e-5
    bn_momentum: float = 0.1
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "layer_widths", tuple(int(w) for w in self.layer_widths))
        if isinstance(self.adam, dict):
            object.__setattr__(self, "adam", AdamConfig(**self.adam))

    def validate(self) -> None:
        w = self.layer_widths
        if len(w) < 2:
            raise ParameterError("need at least an input width and an output width")
        if w[-1] != 2 or min(w) < 1:
            raise ParameterError(f"bad layer widths {w}: output width must be 2, all widths >= 1")
        if not 0 <= self.dropout_p < 1:
            raise ParameterError("dropout_p must lie in [0, 1)")
        if self.epochs < 0 or self.batch_size < 1:
            raise ParameterError("epochs must be >= 0 and batch_size >= 1")

    def with_input_width(self, n: int) -> "ModelConfig":
        return replace(self, layer_widths=(n,) + self.layer_widths[1:])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["layer_widths"] = list(self.layer_widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = dict(d)
        if "adam" in d:
            d["adam"] = AdamConfig(**d["adam"])
        return cls(**d)


@dataclass
class Layer:
    W: np.ndarray  # (fan_in, fan_out)
    b: np.ndarray
    gamma: np.ndarray | None = None
    beta: np.ndarray | None = None
    running_mean: np.ndarray | None = None
    running_var: np.ndarray | None = None

    @property
    def has_bn(self) -> bool:
        return self.gamma is not None

    def trainable(self) -> list[str]:
        return ["W", "b", "gamma", "beta"] if self.has_bn else ["W", "b"]


@dataclass
class ModelParams:
    """Network weights; ``normalizer`` and ``columns`` describe the expected raw input."""

    config: ModelConfig
    layers: list[Layer]
    training: bool = False
    normalizer: Normalizer | None = None
    columns: np.ndarray | None = None

    def tensors(self) -> list[tuple[str, np.ndarray]]:
        """(name, array) for every trainable tensor, in a fixed order."""
        return [(f"layer{i}.{k}", getattr(L, k)) for i, L in enumerate(self.layers) for k in L.trainable()]


def count_params(config: ModelConfig) -> int:
    """Weights + biases + BN affine parameters (running statistics excluded)."""
    w = config.layer_widths
    total = 0
    for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
        total += a * b + b
        if config.batchnorm and i < len(w) - 2:
            total += 2 * b
    return total


def init_params(config: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """He-uniform hidden layers. The output layer is drawn from a bound ten times
    below 1/sqrt(fan_in), so the untrained softmax starts close to uniform."""
    config.validate()
    w = config.layer_widths
    layers = []
    for i, (a, b) in enumerate(zip(w[:-1], w[1:])):
        hidden = i < len(w) - 2
        bound = math.sqrt(6.0 / a) if hidden else OUTPUT_INIT_SCALE / math.sqrt(a)
        L = Layer(rng.uniform(-bound, bound, size=(a, b)), np.zeros(b))
        if hidden and config.batchnorm:
            L.gamma, L.beta = np.ones(b), np.zeros(b)
            L.running_mean, L.running_var = np.zeros(b), np.ones(b)
        layers.append(L)
    return ModelParams(config, layers)


# --------------------------------------------------------------------------
# forward / backward


def _softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def cross_entropy(logits: np.ndarray, y: np.ndarray) -> float:
    m = logits.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))[:, 0]
    return float(np.mean(lse - logits[np.arange(y.size), y]))


@dataclass
class _Cache:
    inputs: list[np.ndarray] = field(default_factory=list)
    xhat: list[np.ndarray | None] = field(default_factory=list)
    inv_std: list[np.ndarray | None] = field(default_factory=list)
    pre_relu: list[np.ndarray] = field(default_factory=list)
    drop: list[np.ndarray | None] = field(default_factory=list)
    batch_mean: list[np.ndarray | None] = field(default_factory=list)
    batch_var: list[np.ndarray | None] = field(default_factory=list)
    logits: np.ndarray | None = None


def forward(
    params: ModelParams,
    X: np.ndarray,
    mode: str = "eval",
    rng: np.random.Generator | None = None,
    dropout: bool | None = None,
    dtype=np.float64,
) -> tuple[np.ndarray, _Cache]:
    """Class probabilities ``(n, 2)`` and the activation cache.

    In ``"train"`` mode BatchNorm uses batch statistics and dropout (inverted
    scaling) is active unless ``dropout=False``; ``"eval"`` uses running
    statistics and no dropout. Running statistics are never modified here.
    """
    if mode not in ("train", "eval"):
        raise ParameterError(f"mode must be 'train' or 'eval', got {mode!r}")
    cfg = params.config
    X = np.asarray(X, dtype=dtype)
    if X.ndim == 1:
        X = X[None, :]
    if X.shape[1] != cfg.layer_widths[0]:
        raise ParameterError(f"input has {X.shape[1]} features, network expects {cfg.layer_widths[0]}")
    train = mode == "train"
    use_dropout = (cfg.dropout if dropout is None else dropout) and cfg.dropout_p > 0 and train
    if use_dropout and rng is None:
        raise ParameterError("train-mode dropout needs an rng")
    cache = _Cache()
    h = X
    for L in params.layers[:-1]:
        W, b = L.W.astype(dtype, copy=False), L.b.astype(dtype, copy=False)
        cache.inputs.append(h)
        z = h @ W + b
        if L.has_bn:
            if train:
                mu = z.mean(axis=0)
                var = z.var(axis=0)
            else:
                mu, var = L.running_mean.astype(dtype), L.running_var.astype(dtype)
            inv = 1.0 / np.sqrt(var + cfg.bn_eps)
            xhat = (z - mu) * inv
            z = L.gamma.astype(dtype) * xhat + L.beta.astype(dtype)
            cache.xhat.append(xhat)
            cache.inv_std.append(inv)
            cache.batch_mean.append(mu if train else None)
            cache.batch_var.append(var if train else None)
        else:
            cache.xhat.append(None)
            cache.inv_std.append(None)
            cache.batch_mean.append(None)
            cache.batch_var.append(None)
        cache.pre_relu.append(z)
        h = np.maximum(z, 0.0)
        if use_dropout:
            keep = (rng.random(h.shape) >= cfg.dropout_p).astype(dtype) / (1.0 - cfg.dropout_p)
            h = h * keep
            cache.drop.append(keep)
        else:
            cache.drop.append(None)
    out = params.layers[-1]
    cache.inputs.append(h)
    logits = h @ out.W.astype(dtype, copy=False) + out.b.astype(dtype, copy=False)
    cache.logits = logits
    return _softmax(logits), cache


def backward(params: ModelParams, cache: _Cache, y: np.ndarray) -> list[dict[str, np.ndarray]]:
    """Gradients of mean cross-entropy w.r.t. every trainable tensor (train-mode cache)."""
    n = y.size
    probs = _softmax(cache.logits)
    d = probs.copy()
    d[np.arange(n), y] -= 1.0
    d /= n
    grads: list[dict[str, np.ndarray]] = [dict() for _ in params.layers]
    out = params.layers[-1]
    grads[-1]["W"] = cache.inputs[-1].T @ d
    grads[-1]["b"] = d.sum(axis=0)
    dh = d @ out.W.T
    for i in range(len(params.layers) - 2, -1, -1):
        L = params.layers[i]
        if cache.drop[i] is not None:
            dh = dh * cache.drop[i]
        dz = dh * (cache.pre_relu[i] > 0)
        if L.has_bn:
            xhat, inv = cache.xhat[i], cache.inv_std[i]
            grads[i]["gamma"] = (dz * xhat).sum(axis=0)
            grads[i]["beta"] = dz.sum(axis=0)
            dxhat = dz * L.gamma
            m = dxhat.shape[0]
            dz = inv / m * (m * dxhat - dxhat.sum(axis=0) - xhat * (dxhat * xhat).sum(axis=0))
        grads[i]["W"] = cache.inputs[i].T @ dz
        grads[i]["b"] = dz.sum(axis=0)
        dh = dz @ L.W.T
    return grads


def loss_and_grads(
    params: ModelParams, X: np.ndarray, y: np.ndarray, rng: np.random.Generator | None = None, dropout: bool = False
) -> tuple[float, list[dict[str, np.ndarray]]]:
    """Train-mode loss and gradients on one batch."""
    _, cache = forward(params, X, "train", rng=rng, dropout=dropout)
    return cross_entropy(cache.logits, np.asarray(y)), backward(params, cache, np.asarray(y))


def train_loss(params: ModelParams, X: np.ndarray, y: np.ndarray) -> float:
    """Train-mode (batch-statistics) loss without dropout; used for gradient checking."""
    _, cache = forward(params, X, "train", dropout=False)
    return cross_entropy(cache.logits, np.asarray(y))


# --------------------------------------------------------------------------
# training


class Adam:
    def __init__(self, tensors: Sequence[np.ndarray], cfg: AdamConfig):
        self.cfg = cfg
        self.t = 0
        self.m = [np.zeros_like(p) for p in tensors]
        self.v = [np.zeros_like(p) for p in tensors]

    def step(self, tensors: Sequence[np.ndarray], grads: Sequence[np.ndarray]) -> None:
        """In-place bias-corrected Adam update."""
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for p, g, m, v in zip(tensors, grads, self.m, self.v):
            m *= c.beta1
            m += (1.0 - c.beta1) * g
            v *= c.beta2
            v += (1.0 - c.beta2) * g * g
            p -= c.lr * (m / bc1) / (np.sqrt(v / bc2) + c.eps)


@dataclass
class EpochStats:
    epoch: int
    loss: float
    accuracy: float


def predict_proba(params: ModelParams, X: np.ndarray, dtype=np.float64) -> np.ndarray:
    """Eval-mode probabilities for already prepared (normalized, column-selected) inputs."""
    probs, _ = forward(params, X, "eval", dtype=dtype)
    return probs


def prepare_inputs(params: ModelParams, X_raw: np.ndarray) -> np.ndarray:
    X = np.asarray(X_raw, dtype=np.float64)
    if X.ndim == 1:
        X = X[None, :]
    if params.columns is not None:
        X = X[:, params.columns]
    if params.normalizer is not None:
        X = params.normalizer.apply(X)
    return X


def predict_t2d(params: ModelParams, X_raw: np.ndarray) -> np.ndarray:
    """T2D probability for raw 35-feature rows, applying the stored column mask and scaling."""
    return predict_proba(params, prepare_inputs(params, X_raw))[:, 1]


@dataclass(frozen=True)
class Prediction:
    p_nd: float
    p_t2d: float

    def hard_label(self, threshold: float = 0.5) -> int:
        return int(self.p_t2d >= threshold)


def predict_one(params: ModelParams, x: np.ndarray) -> Prediction:
    p = predict_proba(params, np.asarray(x)[None, :])[0]
    return Prediction(float(p[0]), float(p[1]))


def train(
    config: ModelConfig, X: np.ndarray, y: np.ndarray, params: ModelParams | None = None
) -> tuple[ModelParams, list[EpochStats]]:
    """Mini-batch Adam on mean cross-entropy; bit-reproducible under ``config.seed``.

    Each epoch reshuffles, keeps the final short batch, and records the
    eval-mode loss and accuracy over the whole training set.
    """
    config.validate()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.shape[0] == 0:
        raise TrainingError("empty training set")
    if X.shape[1] != config.layer_widths[0]:
        raise TrainingError(f"training inputs have {X.shape[1]} columns, config expects {config.layer_widths[0]}")
    rng = np.random.default_rng(config.seed)
    if params is None:
        params = init_params(config, rng)
    tensors = [t for _, t in params.tensors()]
    opt = Adam(tensors, config.adam)
    mom = config.bn_momentum
    history: list[EpochStats] = []
    n = X.shape[0]
    params.training = True
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            _, cache = forward(params, X[idx], "train", rng=rng)
            grads = backward(params, cache, y[idx])
            opt.step(tensors, [g[k] for g, L in zip(grads, params.layers) for k in L.trainable()])
            m = idx.size
            for L, mu, var in zip(params.layers, cache.batch_mean, cache.batch_var):
                if L.has_bn and mu is not None:
                    unbiased = var * m / (m - 1) if m > 1 else var
                    L.running_mean *= 1.0 - mom
                    L.running_mean += mom * mu
                    L.running_var *= 1.0 - mom
                    L.running_var += mom * unbiased
        probs, cache = forward(params, X, "eval")
        history.append(
            EpochStats(epoch, cross_entropy(cache.logits, y), float(np.mean(np.argmax(probs, axis=1) == y)))
        )
    params.training = False
    return params, history


# --------------------------------------------------------------------------
# serialization


def params_to_dict(params: ModelParams) -> dict:
    layers = []
    for L in params.layers:
        d = {"W": L.W.tolist(), "b": L.b.tolist()}
        if L.has_bn:
            d.update(
                gamma=L.gamma.tolist(),
                beta=L.beta.tolist(),
                running_mean=L.running_mean.tolist(),
                running_var=L.running_var.tolist(),
            )
        layers.append(d)
    return {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "config": params.config.to_dict(),
        "training": params.training,
        "layers": layers,
        "normalizer": None if params.normalizer is None else params.normalizer.to_dict(),
        "columns": None if params.columns is None else [int(c) for c in params.columns],
    }


def save_params(params: ModelParams, path: str | Path) -> None:
    """JSON weight file; float repr round-trips exactly."""
    Path(path).write_text(json.dumps(params_to_dict(params), sort_keys=True, separators=(",", ":")) + "\n")


def params_from_dict(d: dict, config: ModelConfig | None = None) -> ModelParams:
    if not isinstance(d, dict) or d.get("format") != FORMAT_NAME:
        raise ModelLoadError("not a sweetdeep weight file")
    if d.get("version") != FORMAT_VERSION:
        raise ModelLoadError(f"unsupported weight format version {d.get('version')!r}")
    try:
        stored = ModelConfig.from_dict(d["config"])
        layers = []
        for ld in d["layers"]:
            L = Layer(np.asarray(ld["W"], dtype=np.float64), np.asarray(ld["b"], dtype=np.float64))
            if "gamma" in ld:
                L.gamma = np.asarray(ld["gamma"], dtype=np.float64)
                L.beta = np.asarray(ld["beta"], dtype=np.float64)
                L.running_mean = np.asarray(ld["running_mean"], dtype=np.float64)
                L.running_var = np.asarray(ld["running_var"], dtype=np.float64)
            layers.append(L)
        norm = None if d.get("normalizer") is None else Normalizer.from_dict(d["normalizer"])
        cols = None if d.get("columns") is None else np.asarray(d["columns"], dtype=np.int64)
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelLoadError(f"corrupt weight file: {exc}") from exc
    target = config or stored
    w = target.layer_widths
    if len(layers) != len(w) - 1:
        raise ModelLoadError(f"shape mismatch: file has {len(layers)} layers, config expects {len(w) - 1}")
    for i, (L, a, b) in enumerate(zip(layers, w[:-1], w[1:])):
        if L.W.shape != (a, b) or L.b.shape != (b,):
            raise ModelLoadError(f"shape mismatch in layer {i}: got {L.W.shape}, expected {(a, b)}")
        hidden = i < len(w) - 2
        if L.has_bn != (hidden and target.batchnorm):
            raise ModelLoadError(f"BatchNorm presence mismatch in layer {i}")
        if L.has_bn:
            for k in ("gamma", "beta", "running_mean", "running_var"):
                if getattr(L, k).shape != (b,):
                    raise ModelLoadError(f"shape mismatch in layer {i} {k}")
            if np.any(L.running_var < 0):
                raise ModelLoadError("negative running variance")
    return ModelParams(stored, layers, bool(d.get("training", False)), norm, cols)


def load_params(path: str | Path, config: ModelConfig | None = None) -> ModelParams:
    """Load a weight file; with ``config`` the stored shapes must match it."""
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ModelLoadError(f"{path}: corrupt weight file ({exc})") from exc
    return params_from_dict(d, config)
