"""Classical baseline: a small ReLU network trained on the same scaled splits."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .dataset import DynamicsScaler, SplitDataset
from .exceptions import ConfigurationError, SchemaVersionError, TrainingError
from .optim import AdamState, adam_step
from .surrogate import mse

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def layer_shapes(sizes) -> list[tuple[tuple[int, int], tuple[int]]]:
    return [((a, b), (b,)) for a, b in zip(sizes[:-1], sizes[1:])]


def unpack(flat: np.ndarray, sizes) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``[(W, b), ...]`` into a flat parameter vector."""
    out, k = [], 0
    for wshape, bshape in layer_shapes(sizes):
        nw = wshape[0] * wshape[1]
        out.append((flat[k : k + nw].reshape(wshape), flat[k + nw : k + nw + bshape[0]]))
        k += nw + bshape[0]
    return out


def num_params(sizes) -> int:
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


def initial_weights(sizes, rng: np.random.Generator) -> np.ndarray:
    """Weights and biases uniform in +-1/sqrt(fan_in)."""
    parts = []
    for (fan_in, fan_out), _ in layer_shapes(sizes):
        bound = 1.0 / np.sqrt(fan_in)
        parts.append(rng.uniform(-bound, bound, fan_in * fan_out))
        parts.append(rng.uniform(-bound, bound, fan_out))
    return np.concatenate(parts)


def forward(flat, sizes, X) -> np.ndarray:
    h = X
    layers = unpack(flat, sizes)
    for i, (W, b) in enumerate(layers):
        h = h @ W + b
        if i < len(layers) - 1:
            h = np.maximum(h, 0.0)
    return h


def mse_gradient(flat, sizes, X, y) -> tuple[float, np.ndarray]:
    """Mean squared error over all outputs and its gradient by backpropagation."""
    layers = unpack(flat, sizes)
    acts = [X]
    for i, (W, b) in enumerate(layers):
        z = acts[-1] @ W + b
        acts.append(np.maximum(z, 0.0) if i < len(layers) - 1 else z)
    resid = acts[-1] - y
    delta = 2.0 * resid / resid.size
    grads = []
    for i in range(len(layers) - 1, -1, -1):
        W, _ = layers[i]
        grads.append((delta.sum(axis=0), acts[i].T @ delta))
        if i:
            delta = (delta @ W.T) * (acts[i] > 0)
    flat_grad = np.concatenate([g.reshape(-1) for gb, gw in reversed(grads) for g in (gw, gb)])
    return float(np.mean(resid**2)), flat_grad


class MLPRegressor(RegressorMixin, BaseEstimator):
    """Fully connected ReLU network with a linear output, trained with Adam on MSE.

    Like :class:`qmbrl.surrogate.VQCRegressor`, the epoch with the lowest
    validation loss is kept when validation data is given.
    """

    def __init__(self, hidden=(16, 16), learning_rate=0.01, epochs=200, batch_size=32, random_state=None):
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.random_state = random_state

    def fit(self, X, y, X_val=None, y_val=None, init_params=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        y = y.reshape(len(y), -1)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")
        sizes = (X.shape[1], *self.hidden, y.shape[1])
        has_val = X_val is not None
        if has_val:
            X_val, y_val = check_X_y(X_val, y_val, multi_output=True, y_numeric=True)
            y_val = y_val.reshape(len(y_val), -1)
        rng = np.random.default_rng(self.random_state)
        params = initial_weights(sizes, rng) if init_params is None else np.array(init_params, dtype=float)
        if params.shape != (num_params(sizes),):
            raise ConfigurationError(f"expected {num_params(sizes)} parameters, got {params.shape}")
        self.initial_params_ = params.copy()
        opt = AdamState(lr=self.learning_rate)
        history = []
        best = (np.inf, params.copy(), 0)
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(len(X))
            for start in range(0, len(X), self.batch_size):
                idx = order[start : start + self.batch_size]
                loss, grad = mse_gradient(params, sizes, X[idx], y[idx])
                if not np.isfinite(loss):
                    raise TrainingError(f"non-finite loss in epoch {epoch} at sample offset {start}")
                params, opt = adam_step(opt, params, grad)
            train_loss = mse(forward(params, sizes, X), y)
            val_loss = mse(forward(params, sizes, X_val), y_val) if has_val else float("nan")
            history.append((epoch, train_loss, val_loss))
            score = val_loss if has_val else train_loss
            if score < best[0] or not has_val:
                best = (score, params.copy(), epoch)
        self.sizes_ = sizes
        self.params_ = best[1]
        self.best_epoch_ = best[2]
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        return forward(self.params_, self.sizes_, check_array(X))


@dataclass
class MlpModel:
    """Trained network plus the scaler of the data it was fitted on."""

    sizes: tuple
    params: np.ndarray
    scaler: DynamicsScaler
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def predict_scaled(self, X) -> np.ndarray:
        return forward(self.params, self.sizes, np.asarray(X, dtype=float))

    def predict_batch(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.broadcast_to(np.asarray(actions, dtype=float), (len(states),))
        X = self.scaler.transform(np.column_stack([states, actions]))
        return states + self.scaler.inverse_transform_targets(self.predict_scaled(X))

    def evaluate_loss(self, dataset: SplitDataset, split: str = "val") -> float:
        X, y = getattr(dataset, split)
        return mse(self.predict_scaled(X), y)

    def to_dict(self) -> dict:
        return {"schema_version": SCHEMA_VERSION, "kind": "mlp", "sizes": list(self.sizes),
                "params": self.params.tolist(), "scaler": self.scaler.to_dict(),
                "history": [list(h) for h in self.history], "meta": self.meta}

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "mlp":
            raise SchemaVersionError("not an MLP model file of a supported schema version")
        return cls(tuple(d["sizes"]), np.array(d["params"]), DynamicsScaler.from_dict(d["scaler"]),
                   [tuple(h) for h in d["history"]], d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")


def train_mlp(dataset: SplitDataset, *, lr=0.01, epochs=200, batch_size=32, seed=0, hidden=(16, 16)) -> MlpModel:
    Xtr, ytr = dataset.train
    Xva, yva = dataset.val
    if len(Xtr) == 0 or len(Xva) == 0:
        raise ConfigurationError("train and validation splits must be non-empty")
    reg = MLPRegressor(tuple(hidden), lr, epochs, batch_size, random_state=seed).fit(Xtr, ytr, Xva, yva)
    init_val = mse(forward(reg.initial_params_, reg.sizes_, Xva), yva)
    meta = {"seed": seed, "lr": lr, "epochs": epochs, "batch_size": batch_size, "best_epoch": reg.best_epoch_,
            "initial_val_loss": init_val, "n_train": len(Xtr)}
    return MlpModel(reg.sizes_, reg.params_, dataset.scaler, reg.history_, meta)
