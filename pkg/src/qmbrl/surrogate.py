"""VQC dynamics surrogate: Adam-trained regressor and the physical-unit model around it."""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from . import vqc
from .dataset import DynamicsScaler, SplitDataset
from .exceptions import ConfigurationError, SchemaVersionError, TrainingError
from .optim import AdamState, adam_step

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
DEFAULT_ENCODING_SCALE = 1.0


def mse(pred, target) -> float:
    return float(np.mean((np.asarray(pred) - np.asarray(target)) ** 2))


class VQCRegressor(RegressorMixin, BaseEstimator):
    """Data re-uploading circuit regressor trained with Adam on mean squared error.

    Inputs are expected in [-1, 1] (clamped otherwise); each output is the
    ``<Z>`` readout of one qubit, so targets should lie well inside [-1, 1].
    When validation data is passed to :meth:`fit`, the parameters of the epoch
    with the lowest validation loss are kept.

    Parameters
    ----------
    num_qubits, reuploads, layers_per_upload : int
        Circuit shape; the circuit has ``reuploads + 1`` encoding blocks.
    encoding_scale : float
        Angle of ``RY`` per unit input.
    learning_rate, epochs, batch_size : Adam settings.
    grad_method : {"adjoint", "parameter-shift", "parameter-shift-naive"}
        See :func:`qmbrl.vqc.gradient`; all give the same gradient.
    init_range : float
        Parameters start uniform in ``[-init_range, init_range]``.
    random_state : int or None
        Seeds initialisation and the per-epoch shuffles.
    """

    def __init__(self, num_qubits=5, reuploads=3, layers_per_upload=5, encoding_scale=DEFAULT_ENCODING_SCALE,
                 entangler="ring", learning_rate=0.01, epochs=20, batch_size=32, grad_method="adjoint",
                 init_range=np.pi, random_state=None):
        self.num_qubits = num_qubits
        self.reuploads = reuploads
        self.layers_per_upload = layers_per_upload
        self.encoding_scale = encoding_scale
        self.entangler = entangler
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.grad_method = grad_method
        self.init_range = init_range
        self.random_state = random_state

    def _make_template(self, n_inputs, n_outputs) -> vqc.VqcTemplate:
        return vqc.VqcTemplate(self.num_qubits, n_inputs, self.reuploads, self.layers_per_upload, n_outputs,
                               float(self.encoding_scale), self.entangler)

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, multi_output=True, y_numeric=True)
        self._y_1d = y.ndim == 1
        y = y.reshape(len(y), -1)
        template = self._make_template(X.shape[1], y.shape[1])
        has_val = X_val is not None
        if has_val:
            X_val, y_val = check_X_y(X_val, y_val, multi_output=True, y_numeric=True)
            y_val = y_val.reshape(len(y_val), -1)
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigurationError("epochs and batch_size must be positive")

        rng = np.random.default_rng(self.random_state)
        params = rng.uniform(-self.init_range, self.init_range, template.num_params)
        self.initial_params_ = params.copy()
        opt = AdamState(lr=self.learning_rate)
        n = len(X)
        history = []
        best = (np.inf, params.copy(), 0)
        for epoch in range(1, self.epochs + 1):
            order = rng.permutation(n)
            for bi, start in enumerate(range(0, n, self.batch_size)):
                idx = order[start : start + self.batch_size]
                pred = vqc.evaluate(template, X[idx], params)
                resid = pred - y[idx]
                if not np.all(np.isfinite(resid)):
                    raise TrainingError(f"non-finite loss in epoch {epoch}, batch {bi}")
                weights = 2.0 * resid / resid.size
                grad = vqc.gradient(template, X[idx], params, weights, method=self.grad_method)
                try:
                    params, opt = adam_step(opt, params, grad)
                except TrainingError as exc:
                    raise TrainingError(f"epoch {epoch}, batch {bi}: {exc}") from exc
            train_loss = mse(vqc.evaluate(template, X, params), y)
            val_loss = mse(vqc.evaluate(template, X_val, params), y_val) if has_val else float("nan")
            if not np.isfinite(train_loss):
                raise TrainingError(f"non-finite training loss after epoch {epoch}")
            history.append((epoch, train_loss, val_loss))
            logger.info("epoch %d train %.6g val %.6g", epoch, train_loss, val_loss)
            score = val_loss if has_val else train_loss
            if score < best[0] or not has_val:
                best = (score, params.copy(), epoch)

        self.template_ = template
        self.params_ = best[1]
        self.best_epoch_ = best[2]
        self.history_ = history
        self.n_features_in_ = X.shape[1]
        return self

    def predict(self, X):
        check_is_fitted(self)
        X = check_array(X)
        out = vqc.evaluate(self.template_, X, self.params_)
        return out[:, 0] if self._y_1d else out

    def loss(self, X, y) -> float:
        """Mean squared error averaged over samples and outputs."""
        y = np.asarray(y, dtype=float)
        return mse(self.predict(X).reshape(y.shape), y)


@dataclass
class SurrogateModel:
    """One-step dynamics model ``(state, action) -> next state`` in physical units."""

    template: vqc.VqcTemplate
    params: np.ndarray
    scaler: DynamicsScaler
    history: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = vqc.check_params(self.template, self.params)
        self._blocks = vqc.block_unitaries(self.template, self.params)

    def predict_scaled(self, X_scaled) -> np.ndarray:
        return vqc.evaluate(self.template, X_scaled, None, blocks=self._blocks)

    def predict_batch(self, states, actions) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        actions = np.broadcast_to(np.asarray(actions, dtype=float), (len(states),))
        X = self.scaler.transform(np.column_stack([states, actions]))
        delta = self.scaler.inverse_transform_targets(self.predict_scaled(X))
        return states + delta

    def predict(self, state, action: int) -> np.ndarray:
        """Predicted next state: scale inputs (clamped), evaluate, add the unscaled delta."""
        return self.predict_batch(state, action)[0]

    def evaluate_loss(self, dataset: SplitDataset, split: str = "val") -> float:
        X, y = getattr(dataset, split)
        if len(X) == 0:
            raise ConfigurationError(f"split {split!r} is empty")
        return mse(self.predict_scaled(X), y)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "surrogate",
            **vqc.to_json_dict(self.template, self.params),
            "scaler": self.scaler.to_dict(),
            "history": [list(h) for h in self.history],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SurrogateModel":
        if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "surrogate":
            raise SchemaVersionError("not a surrogate model file of a supported schema version")
        template, params = vqc.from_json_dict(d)
        return cls(template, params, DynamicsScaler.from_dict(d["scaler"]),
                   [tuple(h) for h in d["history"]], d.get("meta", {}))

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        return cls.from_dict(json.loads(Path(path).read_text()))


def train(dataset: SplitDataset, template: vqc.VqcTemplate | None = None, *, lr=0.01, epochs=20, batch_size=32,
          seed=0, grad_method="adjoint") -> SurrogateModel:
    """Fit the surrogate on the scaled train split, selecting by validation loss."""
    template = template or vqc.build_model_template(encoding_scale=DEFAULT_ENCODING_SCALE)
    if template.num_inputs != 5 or template.num_outputs != 4:
        raise ConfigurationError("the dynamics template needs 5 inputs and 4 outputs")
    Xtr, ytr = dataset.train
    Xva, yva = dataset.val
    if len(Xtr) == 0 or len(Xva) == 0:
        raise ConfigurationError("train and validation splits must be non-empty")
    reg = VQCRegressor(template.num_qubits, template.reuploads, template.layers_per_upload, template.encoding_scale,
                       template.entangler, lr, epochs, batch_size, grad_method, random_state=seed)
    reg.fit(Xtr, ytr, Xva, yva)
    init_val = mse(vqc.evaluate(reg.template_, Xva, reg.initial_params_), yva)
    meta = {"seed": seed, "lr": lr, "epochs": epochs, "batch_size": batch_size, "best_epoch": reg.best_epoch_,
            "initial_val_loss": init_val, "n_train": len(Xtr)}
    return SurrogateModel(reg.template_, reg.params_, dataset.scaler, reg.history_, meta)
