"""Minimal dense feedforward regressors trained with analytic backprop.

Two fixed shapes are used elsewhere in the package: the off-site predictor
(13 inputs, hidden 10-14-9-8) and the on-site reference model (5 inputs,
hidden 7). Hidden layers are rectifiers, the output is linear, and the loss
is mean squared error. Everything is plain numpy so gradients stay exact
and runs stay reproducible.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DataError, DivergenceError, DomainError, FormatError, UnsupportedVersionError
from .features import ScalerStats

MODEL_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class NetworkSpec:
    """Layer widths excluding the input; the final width must be 1."""

    input_dim: int
    layer_sizes: tuple[int, ...]

    def __post_init__(self) -> None:
        if self.input_dim < 1:
            raise DomainError(f"input_dim must be >= 1: {self.input_dim!r}")
        if not self.layer_sizes or self.layer_sizes[-1] != 1:
            raise DomainError(f"layer_sizes must end in 1: {self.layer_sizes!r}")
        if any(s < 1 for s in self.layer_sizes):
            raise DomainError(f"layer sizes must be >= 1: {self.layer_sizes!r}")

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.input_dim,) + tuple(self.layer_sizes)


SUBMODEL_SPEC = NetworkSpec(input_dim=13, layer_sizes=(10, 14, 9, 8, 1))
ONSITE_SPEC = NetworkSpec(input_dim=5, layer_sizes=(7, 1))


class Network:
    """Weights and biases for one feedforward regressor."""

    def __init__(self, spec: NetworkSpec, weights: list[np.ndarray], biases: list[np.ndarray]):
        dims = spec.dims
        if len(weights) != len(dims) - 1 or len(biases) != len(dims) - 1:
            raise DataError("parameter count does not match spec")
        for i, (w, b) in enumerate(zip(weights, biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise DataError(f"layer {i} has shape {w.shape}, expected {(dims[i], dims[i + 1])}")
        self.spec = spec
        self.weights = weights
        self.biases = biases

    def clone(self) -> "Network":
        return Network(self.spec, [w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def parameter_count(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


def init_network(spec: NetworkSpec, seed: int) -> Network:
    """Glorot-uniform weights, zero biases, reproducible per seed."""
    rng = np.random.default_rng(seed)
    dims = spec.dims
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return Network(spec, weights, biases)


def forward_batch(net: Network, x: np.ndarray) -> np.ndarray:
    """Predictions for an (n, input_dim) matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise DataError(f"expected (n, {net.spec.input_dim}) input, got {x.shape}")
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        h = h @ w + b
        if i != last:
            h = np.maximum(h, 0.0)
    return h[:, 0]


def forward(net: Network, x: Sequence[float]) -> float:
    return float(forward_batch(net, np.asarray(x, dtype=np.float64)[None, :])[0])


def _forward_backward(
    net: Network, x: np.ndarray, y: np.ndarray
) -> tuple[float, list[np.ndarray], list[np.ndarray]]:
    n = x.shape[0]
    activations = [x]
    pre: list[np.ndarray] = []
    h = x
    last = len(net.weights) - 1
    for i, (w, b) in enumerate(zip(net.weights, net.biases)):
        z = h @ w + b
        pre.append(z)
        h = np.maximum(z, 0.0) if i != last else z
        activations.append(h)
    err = activations[-1][:, 0] - y
    loss = float(np.mean(err * err))

    delta = (2.0 / n) * err[:, None]
    grads_w = [np.empty(0)] * len(net.weights)
    grads_b = [np.empty(0)] * len(net.biases)
    for i in range(last, -1, -1):
        grads_w[i] = activations[i].T @ delta
        grads_b[i] = delta.sum(axis=0)
        if i > 0:
            delta = delta @ net.weights[i].T
            # Rectifier subgradient: zero at exactly zero pre-activation.
            delta[pre[i - 1] <= 0.0] = 0.0
    return loss, grads_w, grads_b


def gradients(net: Network, x: np.ndarray, y: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Exact MSE gradients for every weight matrix and bias vector."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise DataError(f"incompatible batch shapes {x.shape} / {y.shape}")
    if x.shape[0] == 0:
        raise DataError("empty batch")
    _, gw, gb = _forward_backward(net, x, y)
    return gw, gb


def mse_loss(net: Network, x: np.ndarray, y: np.ndarray) -> float:
    pred = forward_batch(net, x)
    err = pred - np.asarray(y, dtype=np.float64)
    return float(np.mean(err * err))


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    epochs: int = 200
    batch_size: int = 256
    learning_rate: float = 1e-3
    optimizer: str = "adam"
    validation_fraction: float = 0.1
    patience: int = 10

    def __post_init__(self) -> None:
        if self.epochs < 0:
            raise DomainError(f"epochs must be >= 0: {self.epochs!r}")
        if self.batch_size < 1:
            raise DomainError(f"batch_size must be >= 1: {self.batch_size!r}")
        if self.learning_rate <= 0:
            raise DomainError(f"learning_rate must be > 0: {self.learning_rate!r}")
        if self.optimizer not in ("adam", "sgd"):
            raise DomainError(f"unknown optimizer: {self.optimizer!r}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise DomainError(f"validation_fraction must be in [0, 1): {self.validation_fraction!r}")
        if self.patience < 0:
            raise DomainError(f"patience must be >= 0: {self.patience!r}")


class _Adam:
    def __init__(self, params: list[np.ndarray], lr: float, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


class _Sgd:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
        for p, g in zip(params, grads):
            p -= self.lr * g


def train(
    net: Network, x: np.ndarray, y: np.ndarray, cfg: TrainConfig
) -> tuple[Network, list[tuple[float, float]]]:
    """Mini-batch training with early stopping on a held-out slice.

    Returns the parameters from the best validation epoch and a history of
    (train_loss, val_loss) per completed epoch. With epochs=0 the input
    network is returned untouched. Non-finite loss raises DivergenceError
    naming the epoch.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != net.spec.input_dim:
        raise DataError(f"expected (n, {net.spec.input_dim}) training matrix, got {x.shape}")
    if x.shape[0] != y.shape[0] or x.shape[0] == 0:
        raise DataError("training inputs and labels must be non-empty and aligned")
    if cfg.epochs == 0:
        return net, []

    rng = np.random.default_rng(cfg.seed)
    n = x.shape[0]
    n_val = int(round(cfg.validation_fraction * n))
    if n_val >= n:
        n_val = n - 1
    perm = rng.permutation(n)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    x_train, y_train = x[train_idx], y[train_idx]
    x_val, y_val = (x[val_idx], y[val_idx]) if n_val > 0 else (x_train, y_train)

    net = net.clone()
    params = net.weights + net.biases
    opt = _Adam(params, cfg.learning_rate) if cfg.optimizer == "adam" else _Sgd(cfg.learning_rate)

    best_val = math.inf
    best_params = [p.copy() for p in params]
    bad_epochs = 0
    history: list[tuple[float, float]] = []
    n_train = x_train.shape[0]
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_train)
        # Overflow here is not an error condition: it surfaces as a
        # non-finite loss and raises DivergenceError below.
        with np.errstate(over="ignore", invalid="ignore"):
            for start in range(0, n_train, cfg.batch_size):
                batch = order[start : start + cfg.batch_size]
                _, gw, gb = _forward_backward(net, x_train[batch], y_train[batch])
                opt.step(params, gw + gb)
            train_loss = mse_loss(net, x_train, y_train)
            val_loss = mse_loss(net, x_val, y_val)
        if not (math.isfinite(train_loss) and math.isfinite(val_loss)):
            raise DivergenceError(epoch)
        history.append((train_loss, val_loss))
        if val_loss < best_val:
            best_val = val_loss
            best_params = [p.copy() for p in params]
            bad_epochs = 0
        else:
            bad_epochs += 1
            if bad_epochs >= max(1, cfg.patience):
                break
    for p, best in zip(params, best_params):
        p[...] = best
    return net, history


def _scaler_to_dict(scaler: ScalerStats) -> dict:
    return {
        "mean": list(scaler.mean),
        "sd": list(scaler.sd),
        "label_mean": scaler.label_mean,
        "label_sd": scaler.label_sd,
    }


def _scaler_from_dict(d: dict) -> ScalerStats:
    return ScalerStats(tuple(d["mean"]), tuple(d["sd"]), float(d["label_mean"]), float(d["label_sd"]))


def save_network(net: Network, path: str | os.PathLike, scaler: ScalerStats | None = None) -> None:
    """Write a model (and its scaler, if any) as round-trippable JSON."""
    doc = {
        "version": MODEL_SCHEMA_VERSION,
        "spec": {"input_dim": net.spec.input_dim, "layer_sizes": list(net.spec.layer_sizes)},
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
        "scaler": None if scaler is None else _scaler_to_dict(scaler),
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)


def load_network(path: str | os.PathLike) -> tuple[Network, ScalerStats | None]:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise FormatError(f"not a model file: {exc}") from exc
    if not isinstance(doc, dict) or "version" not in doc:
        raise FormatError("model file missing version")
    if doc["version"] != MODEL_SCHEMA_VERSION:
        raise UnsupportedVersionError(f"unsupported model version: {doc['version']!r}")
    try:
        spec = NetworkSpec(int(doc["spec"]["input_dim"]), tuple(doc["spec"]["layer_sizes"]))
        weights = [np.asarray(w, dtype=np.float64) for w in doc["weights"]]
        biases = [np.asarray(b, dtype=np.float64) for b in doc["biases"]]
        net = Network(spec, weights, biases)
        scaler = None if doc.get("scaler") is None else _scaler_from_dict(doc["scaler"])
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"malformed model file: {exc}") from exc
    return net, scaler
