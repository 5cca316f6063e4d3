"""Circuit policy, model roll-out returns, swarm policy search and environment evaluation.

Policy search never touches the environment: the fitness of a parameter
vector is the mean undiscounted return of closed-loop roll-outs on the
surrogate from a fixed set of start states.  Environment evaluation is a
separate, diagnostic step that uses start states drawn from a different
seed stream.
"""
from __future__ import annotations

import csv
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.preprocessing import MinMaxScaler

from . import _kernels, cartpole, vqc
from .exceptions import ConfigurationError, SchemaVersionError
from .optim import PSO_ACCEL, PSO_INERTIA, PSOResult, pso_maximize
from .surrogate import SurrogateModel

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1
# a readout of exactly 0 pushes right
ACTION_THRESHOLD = 0.0
WORKERS_ENV = "QMBRL_WORKERS"
_LIMITS = np.array([cartpole.X_LIMIT, cartpole.THETA_LIMIT, cartpole.X_CENTER, cartpole.THETA_UPRIGHT])


def start_states(seed: int, n: int, stream: int) -> np.ndarray:
    """Reset states from the seed stream ``[seed, stream]``: 0 for fitness, 1 for evaluation."""
    return cartpole.reset(np.random.default_rng([seed, stream]), n)


def fitness_start_states(seed: int, n: int) -> np.ndarray:
    return start_states(seed, n, 0)


def evaluation_start_states(seed: int, n: int) -> np.ndarray:
    return start_states(seed, n, 1)


def resolve_workers(workers: int | None) -> int:
    """``workers`` if given, else ``$QMBRL_WORKERS``, else 1."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    if workers < 1:
        raise ConfigurationError("workers must be >= 1")
    return workers


@dataclass
class VQCPolicy:
    """Deterministic binary policy: scaled state -> circuit -> sign of ``<Z_0>``."""

    template: vqc.VqcTemplate
    params: np.ndarray
    state_scaler: MinMaxScaler

    def __post_init__(self):
        if self.template.num_inputs != 4 or self.template.num_outputs != 1:
            raise ConfigurationError("a policy circuit needs 4 inputs and 1 output")
        self.params = vqc.check_params(self.template, self.params)
        self._blocks = vqc.block_unitaries(self.template, self.params)

    @classmethod
    def from_model(cls, model: SurrogateModel, params, template: vqc.VqcTemplate | None = None) -> "VQCPolicy":
        """Policy sharing the surrogate's state scaling."""
        return cls(template or vqc.build_policy_template(), params, model.scaler.state_scaler_)

    def readout(self, states) -> np.ndarray:
        X = self.state_scaler.transform(np.atleast_2d(np.asarray(states, dtype=float)))
        return vqc.evaluate(self.template, X, None, blocks=self._blocks)[:, 0]

    def act_batch(self, states) -> np.ndarray:
        return (self.readout(states) >= ACTION_THRESHOLD).astype(int)

    def act(self, state) -> int:
        return int(self.act_batch(state)[0])

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "policy",
            **vqc.to_json_dict(self.template, self.params),
            "state_min": self.state_scaler.data_min_.tolist(),
            "state_max": self.state_scaler.data_max_.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VQCPolicy":
        if d.get("schema_version") != SCHEMA_VERSION or d.get("kind") != "policy":
            raise SchemaVersionError("not a policy file of a supported schema version")
        template, params = vqc.from_json_dict(d)
        scaler = MinMaxScaler((-1.0, 1.0), clip=True).fit(np.array([d["state_min"], d["state_max"]]))
        return cls(template, params, scaler)

    def save(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "VQCPolicy":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class RolloutConfig:
    horizon: int = 500
    n_starts: int = 100
    repetitions: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1 or self.n_starts < 1 or self.repetitions < 1:
            raise ConfigurationError("horizon, n_starts and repetitions must all be >= 1")

    def start_states(self) -> np.ndarray:
        return fitness_start_states(self.seed, self.n_starts)


def estimate_returns(model, policy, starts, horizon: int) -> tuple[np.ndarray, np.ndarray]:
    """Model returns from each row of ``starts`` plus a non-finite flag per roll-out.

    Works for any ``model`` with ``predict_batch(states, actions)``.  Rewards
    of predicted states 1..H are summed with no early termination; once a
    roll-out turns non-finite it scores nothing further.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    s = np.array(starts, dtype=float, ndmin=2)
    returns = np.zeros(len(s))
    alive = np.ones(len(s), dtype=bool)
    for _ in range(horizon):
        if not alive.any():
            break
        idx = np.flatnonzero(alive)
        nxt = model.predict_batch(s[idx], policy.act_batch(s[idx]))
        ok = np.all(np.isfinite(nxt), axis=1)
        alive[idx[~ok]] = False
        s[idx[ok]] = nxt[ok]
        returns[idx[ok]] += cartpole.reward_batch(nxt[ok])
    return returns, ~alive


def estimate_return(model, policy, s0, horizon: int) -> float:
    returns, bad = estimate_returns(model, policy, s0, horizon)
    if bad[0]:
        logger.warning("roll-out became non-finite; remaining steps scored 0")
    return float(returns[0])


class PolicyFitness:
    """Picklable fitness ``(k, n_params) -> (k,)`` over a fixed start-state set.

    Each particle is scored independently by the compiled roll-out, so values
    do not depend on how particles are batched across workers.
    """

    def __init__(self, model: SurrogateModel, template: vqc.VqcTemplate, config: RolloutConfig):
        if template.num_inputs != 4 or template.num_outputs != 1:
            raise ConfigurationError("a policy circuit needs 4 inputs and 1 output")
        self.template = template
        self.config = config
        self.starts = np.repeat(config.start_states(), config.repetitions, axis=0)
        sc = model.scaler
        self._model_args = (
            np.ascontiguousarray(model._blocks), model.template.num_qubits, float(model.template.encoding_scale),
            sc.state_scaler_.scale_.copy(), sc.state_scaler_.min_.copy(),
        )
        self._target = (sc.target_scaler_.scale_.copy(), sc.target_scaler_.min_.copy())
        self._policy_scaling = (sc.state_scaler_.scale_.copy(), sc.state_scaler_.min_.copy())

    def returns(self, params) -> tuple[np.ndarray, np.ndarray]:
        blocks = np.ascontiguousarray(vqc.block_unitaries(self.template, vqc.check_params(self.template, params)))
        return _kernels.rollout_returns(
            blocks, self.template.num_qubits, float(self.template.encoding_scale), *self._policy_scaling,
            *self._model_args, *self._target, self.starts, self.config.horizon, _LIMITS,
        )

    def score(self, params) -> float:
        return float(np.mean(self.returns(params)[0]))

    def __call__(self, positions) -> np.ndarray:
        return np.array([self.score(p) for p in np.atleast_2d(positions)])


def fitness(model, params, config: RolloutConfig, template: vqc.VqcTemplate | None = None) -> float:
    """Mean model return of the policy ``params`` over the configured start states."""
    template = template or vqc.build_policy_template()
    if isinstance(model, SurrogateModel):
        return PolicyFitness(model, template, config).score(params)
    starts = np.repeat(config.start_states(), config.repetitions, axis=0)
    policy = VQCPolicy(template, params, model.scaler.state_scaler_)
    return float(np.mean(estimate_returns(model, policy, starts, config.horizon)[0]))


@dataclass
class EvaluationReport:
    start_states: np.ndarray
    returns: np.ndarray
    steps: np.ndarray
    max_steps: int = cartpole.MAX_EPISODE_STEPS

    @property
    def mean_return(self) -> float:
        return float(np.mean(self.returns))

    @property
    def mean_steps(self) -> float:
        return float(np.mean(self.steps))

    @property
    def perfect(self) -> bool:
        return int(self.steps.min()) == self.max_steps

    def summary(self) -> dict:
        return {"mean_return": self.mean_return, "mean_steps": self.mean_steps, "perfect": self.perfect,
                "n_episodes": len(self.steps)}

    def write_csv(self, path) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["episode", *cartpole.STATE_FIELDS, "return", "steps"])
            for i, (s, r, n) in enumerate(zip(self.start_states, self.returns, self.steps)):
                w.writerow([i, *(repr(float(v)) for v in s), repr(float(r)), int(n)])


def evaluate_on_env(policy, n_states: int = 100, max_steps: int = cartpole.MAX_EPISODE_STEPS, seed: int = 0,
                    physics: cartpole.PhysicsParams = cartpole.DEFAULT_PHYSICS) -> EvaluationReport:
    """Run real episodes (termination plus truncation) from held-out start states.

    ``returns`` sums the shaped reward of every visited state, so the
    terminal state contributes 0; ``steps`` is the episode length, which is
    also the return under a +1-per-step reward.
    """
    starts = evaluation_start_states(seed, n_states)
    s = starts.copy()
    returns = np.zeros(n_states)
    steps = np.zeros(n_states, dtype=int)
    alive = np.ones(n_states, dtype=bool)
    for _ in range(max_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        nxt, term = cartpole.step_batch(s[idx], policy.act_batch(s[idx]), physics)
        s[idx] = nxt
        returns[idx] += cartpole.reward_batch(nxt)
        steps[idx] += 1
        alive[idx[term]] = False
    return EvaluationReport(starts, returns, steps, max_steps)


@dataclass
class SearchRecord:
    evaluation: int
    fitness: float
    env_return: float = float("nan")
    env_steps: float = float("nan")


HISTORY_COLUMNS = ("evaluation", "model_return", "env_return", "env_steps")


def write_history(history: list[SearchRecord], path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HISTORY_COLUMNS)
        for h in history:
            w.writerow([h.evaluation, repr(h.fitness), repr(h.env_return), repr(h.env_steps)])


class ModelBasedPolicySearch(BaseEstimator):
    """Particle swarm search for policy parameters maximising model fitness.

    ``fit(model)`` never steps the environment unless ``eval_during_search``
    is set, in which case every improvement of the incumbent is also scored
    on the real system for diagnostics only.

    Parameters
    ----------
    n_particles, budget : swarm size and total number of fitness evaluations.
    horizon, n_starts, repetitions : roll-out settings (see :class:`RolloutConfig`).
    reuploads, layers_per_upload : policy circuit shape.
    seed : drives the swarm, the fitness start states and the evaluation start states.
    workers : process count for fitness evaluation (``None`` reads ``$QMBRL_WORKERS``).
    """

    def __init__(self, n_particles=100, budget=20_000, horizon=500, n_starts=100, repetitions=1, reuploads=3,
                 layers_per_upload=3, seed=0, workers=None, eval_during_search=False, eval_episodes=100):
        self.n_particles = n_particles
        self.budget = budget
        self.horizon = horizon
        self.n_starts = n_starts
        self.repetitions = repetitions
        self.reuploads = reuploads
        self.layers_per_upload = layers_per_upload
        self.seed = seed
        self.workers = workers
        self.eval_during_search = eval_during_search
        self.eval_episodes = eval_episodes

    def fit(self, model: SurrogateModel, y=None):
        template = vqc.build_policy_template(
            reuploads=self.reuploads, layers_per_upload=self.layers_per_upload,
            encoding_scale=model.template.encoding_scale,
        )
        config = RolloutConfig(self.horizon, self.n_starts, self.repetitions, self.seed)
        fit_fn = PolicyFitness(model, template, config)
        history: list[SearchRecord] = []

        def record(evaluation, value, params):
            rec = SearchRecord(evaluation, value)
            if self.eval_during_search:
                rep = evaluate_on_env(VQCPolicy.from_model(model, params, template), self.eval_episodes,
                                      seed=self.seed)
                rec.env_return, rec.env_steps = rep.mean_return, rep.mean_steps
            logger.info("eval %d fitness %.4f env steps %s", evaluation, value, rec.env_steps)
            history.append(rec)

        workers = resolve_workers(self.workers)
        kwargs = dict(dim=template.num_params, budget=self.budget, seed=self.seed, n_particles=self.n_particles,
                      inertia=PSO_INERTIA, cognitive=PSO_ACCEL, social=PSO_ACCEL, on_improvement=record)
        if workers > 1:
            with ProcessPoolExecutor(workers) as pool:
                result = pso_maximize(fit_fn, map_batches=pool.map, n_chunks=workers, **kwargs)
        else:
            result = pso_maximize(fit_fn, **kwargs)

        self.template_ = template
        self.result_: PSOResult = result
        self.history_ = history
        self.policy_ = VQCPolicy.from_model(model, result.best_params, template)
        return self

    def evaluate(self, n_states=100, max_steps=cartpole.MAX_EPISODE_STEPS) -> EvaluationReport:
        return evaluate_on_env(self.policy_, n_states, max_steps, seed=self.seed)


def search(model: SurrogateModel, **params) -> tuple[VQCPolicy, list[SearchRecord]]:
    est = ModelBasedPolicySearch(**params).fit(model)
    return est.policy_, est.history_
