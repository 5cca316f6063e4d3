"""Offline transition dataset: random-policy generation, scaling, splits, persistence.

On disk a dataset is a CSV of raw transitions (one row per transition) plus a
JSON sidecar with the scaler, seeds, split indices and generation statistics.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.preprocessing import MinMaxScaler
from sklearn.utils.validation import check_array, check_is_fitted

from . import cartpole
from .exceptions import ConfigurationError, SchemaVersionError

SCHEMA_VERSION = 1
DEFAULT_SIZE = 10_000
DEFAULT_SPLIT = (8_000, 1_000, 1_000)
INPUT_RANGE = (-1.0, 1.0)
TARGET_RANGE = (-0.5, 0.5)
CSV_COLUMNS = (
    list(cartpole.STATE_FIELDS)
    + ["action"]
    + [f"next_{f}" for f in cartpole.STATE_FIELDS]
    + ["episode_id", "step_index"]
)


@dataclass
class Transitions:
    """Column-oriented transition records."""

    states: np.ndarray
    actions: np.ndarray
    next_states: np.ndarray
    episode_ids: np.ndarray
    step_indices: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def deltas(self) -> np.ndarray:
        return self.next_states - self.states

    @property
    def inputs(self) -> np.ndarray:
        """Raw model inputs ``(x, x_dot, theta, theta_dot, action)``."""
        return np.column_stack([self.states, self.actions.astype(float)])

    def subset(self, idx) -> "Transitions":
        return Transitions(
            self.states[idx], self.actions[idx], self.next_states[idx],
            self.episode_ids[idx], self.step_indices[idx], dict(self.meta),
        )


def generate(seed: int = 0, target_size: int = DEFAULT_SIZE, max_episode_steps: int = cartpole.MAX_EPISODE_STEPS,
             physics: cartpole.PhysicsParams = cartpole.DEFAULT_PHYSICS) -> Transitions:
    """Roll out a uniform-random policy until ``target_size`` transitions exist.

    Episodes end on termination or truncation; the last episode is cut so
    exactly ``target_size`` records are returned.  ``meta`` records the number
    of episodes in the data and the mean length of the completed ones.
    """
    if target_size < 1:
        raise ConfigurationError("target_size must be positive")
    rng = np.random.default_rng(seed)
    states, actions, nexts, eps, steps = [], [], [], [], []
    lengths = []
    episode = 0
    while len(actions) < target_size:
        s = cartpole.reset(rng)
        t = 0
        while True:
            a = int(rng.integers(2))
            nxt, terminated = cartpole.step(s, a, physics)
            states.append(s)
            actions.append(a)
            nexts.append(nxt)
            eps.append(episode)
            steps.append(t)
            t += 1
            s = nxt
            if terminated or t >= max_episode_steps or len(actions) >= target_size:
                break
        if terminated or t >= max_episode_steps:
            lengths.append(t)
        episode += 1
    meta = {
        "seed": seed,
        "target_size": target_size,
        "n_episodes": episode,
        "n_completed_episodes": len(lengths),
        "mean_episode_length": float(np.mean(lengths)) if lengths else float("nan"),
    }
    return Transitions(
        np.array(states), np.array(actions, dtype=int), np.array(nexts),
        np.array(eps, dtype=int), np.array(steps, dtype=int), meta,
    )


class DynamicsScaler(TransformerMixin, BaseEstimator):
    """Min-max scaling of model inputs and delta targets.

    The four state inputs map the fitted range onto [-1, 1] and are clipped
    outside it; the action column maps {0, 1} onto {-1, +1} directly.  Targets
    map onto [-0.5, 0.5] without clipping.
    """

    def fit(self, X, y):
        X = check_array(X)
        y = check_array(y)
        if X.shape[1] != 5 or y.shape[1] != 4:
            raise ConfigurationError("expected X with 5 columns and y with 4 columns")
        for name, arr in (("state", X[:, :4]), ("delta", y)):
            span = arr.max(axis=0) - arr.min(axis=0)
            if np.any(span <= 0):
                dims = np.flatnonzero(span <= 0).tolist()
                raise ConfigurationError(f"degenerate {name} dimension(s) {dims}: min == max")
        self.state_scaler_ = MinMaxScaler(INPUT_RANGE, clip=True).fit(X[:, :4])
        self.target_scaler_ = MinMaxScaler(TARGET_RANGE).fit(y)
        self.n_features_in_ = 5
        return self

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X)
        return np.column_stack([self.state_scaler_.transform(X[:, :4]), 2.0 * X[:, 4] - 1.0])

    def transform_states(self, states):
        check_is_fitted(self)
        return self.state_scaler_.transform(np.atleast_2d(states))

    def transform_targets(self, y):
        check_is_fitted(self)
        return self.target_scaler_.transform(check_array(y))

    def inverse_transform_targets(self, y_scaled):
        check_is_fitted(self)
        return self.target_scaler_.inverse_transform(np.atleast_2d(y_scaled))

    def inverse_transform_states(self, scaled):
        check_is_fitted(self)
        return self.state_scaler_.inverse_transform(np.atleast_2d(scaled))

    def to_dict(self) -> dict:
        check_is_fitted(self)
        return {
            "state_min": self.state_scaler_.data_min_.tolist(),
            "state_max": self.state_scaler_.data_max_.tolist(),
            "delta_min": self.target_scaler_.data_min_.tolist(),
            "delta_max": self.target_scaler_.data_max_.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DynamicsScaler":
        X = np.column_stack([np.array([d["state_min"], d["state_max"]]), [0.0, 1.0]])
        y = np.array([d["delta_min"], d["delta_max"]])
        return cls().fit(X, y)


def split_indices(n: int, sizes=DEFAULT_SPLIT, seed: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Disjoint train/val/test index sets from one seeded permutation.

    Prefixes of the train indices are nested subsets, so smaller training
    fractions taken with :meth:`SplitDataset.with_train_fraction` are
    contained in larger ones.
    """
    if any(s < 0 for s in sizes) or sum(sizes) > n:
        raise ConfigurationError(f"cannot split {n} records into sizes {tuple(sizes)}")
    perm = np.random.default_rng(seed).permutation(n)
    a, b, c = sizes
    return perm[:a], perm[a : a + b], perm[a + b : a + b + c]


@dataclass
class SplitDataset:
    transitions: Transitions
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    scaler: DynamicsScaler
    split_seed: int = 0

    def _scaled(self, idx):
        sub = self.transitions.subset(idx)
        return self.scaler.transform(sub.inputs), self.scaler.transform_targets(sub.deltas)

    @property
    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self._scaled(self.train_idx)

    @property
    def val(self) -> tuple[np.ndarray, np.ndarray]:
        return self._scaled(self.val_idx)

    @property
    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self._scaled(self.test_idx)

    def with_train_fraction(self, fraction: float) -> "SplitDataset":
        """Same val/test and scaler, training set cut to the leading ``fraction``."""
        k = int(round(fraction * len(self.train_idx)))
        return SplitDataset(
            self.transitions, self.train_idx[:k], self.val_idx, self.test_idx, self.scaler, self.split_seed
        )

    @property
    def meta(self) -> dict:
        return self.transitions.meta


def compute_targets_and_scale(transitions: Transitions, sizes=DEFAULT_SPLIT, seed: int = 0) -> SplitDataset:
    """Split the records and fit the scaler on the training part only."""
    if len(transitions) < 3:
        raise ConfigurationError("need at least 3 records")
    tr, va, te = split_indices(len(transitions), sizes, seed)
    train = transitions.subset(tr)
    scaler = DynamicsScaler().fit(train.inputs, train.deltas)
    return SplitDataset(transitions, tr, va, te, scaler, seed)


def split(transitions: Transitions, sizes=DEFAULT_SPLIT, seed: int = 0) -> SplitDataset:
    return compute_targets_and_scale(transitions, sizes, seed)


def sidecar_path(path) -> Path:
    return Path(path).with_suffix(".json")


def save(dataset: SplitDataset, path) -> None:
    """Write ``path`` (CSV) and its ``.json`` sidecar.  Floats use ``repr``
    so loading is lossless."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    t = dataset.transitions
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for i in range(len(t)):
            w.writerow(
                [repr(float(v)) for v in t.states[i]]
                + [int(t.actions[i])]
                + [repr(float(v)) for v in t.next_states[i]]
                + [int(t.episode_ids[i]), int(t.step_indices[i])]
            )
    side = {
        "schema_version": SCHEMA_VERSION,
        "columns": CSV_COLUMNS,
        "n_records": len(t),
        "generation": t.meta,
        "split_seed": dataset.split_seed,
        "split_sizes": [len(dataset.train_idx), len(dataset.val_idx), len(dataset.test_idx)],
        "train_idx": dataset.train_idx.tolist(),
        "val_idx": dataset.val_idx.tolist(),
        "test_idx": dataset.test_idx.tolist(),
        "scaler": dataset.scaler.to_dict(),
    }
    sidecar_path(path).write_text(json.dumps(side, indent=1) + "\n")


def load(path) -> SplitDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    side = json.loads(sidecar_path(path).read_text())
    if side.get("schema_version") != SCHEMA_VERSION:
        raise SchemaVersionError(
            f"{sidecar_path(path)} has schema version {side.get('schema_version')}, expected {SCHEMA_VERSION}"
        )
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if raw.shape != (side["n_records"], len(CSV_COLUMNS)):
        raise SchemaVersionError(f"{path} does not match its sidecar ({raw.shape} rows x columns)")
    t = Transitions(
        raw[:, 0:4], raw[:, 4].astype(int), raw[:, 5:9], raw[:, 9].astype(int), raw[:, 10].astype(int),
        side["generation"],
    )
    idx = [np.array(side[k], dtype=int) for k in ("train_idx", "val_idx", "test_idx")]
    return SplitDataset(t, *idx, DynamicsScaler.from_dict(side["scaler"]), side["split_seed"])
