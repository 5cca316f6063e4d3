"""Adam and particle swarm optimisation."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .exceptions import ConfigurationError, TrainingError

# constriction coefficients: 1 / (2 ln 2) and 1/2 + ln 2
PSO_INERTIA = 0.5 / math.log(2.0)
PSO_ACCEL = 0.5 + math.log(2.0)


@dataclass(frozen=True)
class AdamState:
    lr: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: np.ndarray | None = None
    v: np.ndarray | None = None


def adam_step(state: AdamState, params, gradient) -> tuple[np.ndarray, AdamState]:
    """One bias-corrected Adam update (minimisation); inputs are not modified."""
    p = np.asarray(params, dtype=float)
    g = np.asarray(gradient, dtype=float)
    if g.shape != p.shape:
        raise ConfigurationError(f"gradient shape {g.shape} != params shape {p.shape}")
    if not np.all(np.isfinite(g)):
        bad = np.flatnonzero(~np.isfinite(g))
        raise TrainingError(
            f"non-finite gradient at step {state.step + 1}: {bad.size} bad component(s), first {bad[:5].tolist()}"
        )
    m = np.zeros_like(p) if state.m is None else state.m
    v = np.zeros_like(p) if state.v is None else state.v
    t = state.step + 1
    m = state.beta1 * m + (1.0 - state.beta1) * g
    v = state.beta2 * v + (1.0 - state.beta2) * g * g
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = p - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return new, replace(state, step=t, m=m, v=v)


@dataclass
class PSOResult:
    best_params: np.ndarray
    best_fitness: float
    history: list[tuple[int, float]]
    n_evaluations: int


@dataclass
class Swarm:
    """Synchronous global-best swarm state (maximisation)."""

    positions: np.ndarray
    velocities: np.ndarray
    best_positions: np.ndarray
    best_fitness: np.ndarray
    inertia: float = PSO_INERTIA
    cognitive: float = PSO_ACCEL
    social: float = PSO_ACCEL
    evaluations: int = 0
    history: list[tuple[int, float]] = field(default_factory=list)

    @classmethod
    def initialise(cls, n_particles: int, dim: int, rng: np.random.Generator,
                   bounds: tuple[float, float] = (-np.pi, np.pi), **coeffs) -> "Swarm":
        pos = rng.uniform(bounds[0], bounds[1], size=(n_particles, dim))
        return cls(pos, np.zeros_like(pos), pos.copy(), np.full(n_particles, -np.inf), **coeffs)

    @property
    def global_best(self) -> int:
        return int(np.argmax(self.best_fitness))

    @property
    def incumbent(self) -> float:
        return float(self.best_fitness.max())

    def tell(self, idx: np.ndarray, fitness: np.ndarray, on_improvement=None) -> None:
        """Record fitness of the particles ``idx`` (in order) at their current positions."""
        fitness = np.where(np.isfinite(fitness), fitness, -np.inf)
        for i, f in zip(idx, fitness):
            self.evaluations += 1
            if f > self.incumbent:
                self.history.append((self.evaluations, float(f)))
                if on_improvement is not None:
                    on_improvement(self.evaluations, float(f), self.positions[i].copy())
            if f > self.best_fitness[i]:
                self.best_fitness[i] = f
                self.best_positions[i] = self.positions[i]

    def move(self, rng: np.random.Generator) -> None:
        g = self.best_positions[self.global_best]
        r1 = rng.random(self.positions.shape)
        r2 = rng.random(self.positions.shape)
        self.velocities = (
            self.inertia * self.velocities
            + self.cognitive * r1 * (self.best_positions - self.positions)
            + self.social * r2 * (g - self.positions)
        )
        self.positions = self.positions + self.velocities


def pso_maximize(
    fitness: Callable[[np.ndarray], np.ndarray],
    dim: int,
    budget: int,
    seed: int = 0,
    n_particles: int = 100,
    inertia: float = PSO_INERTIA,
    cognitive: float = PSO_ACCEL,
    social: float = PSO_ACCEL,
    bounds: tuple[float, float] = (-np.pi, np.pi),
    map_batches: Callable[[Callable, Sequence[np.ndarray]], Sequence[np.ndarray]] | None = None,
    n_chunks: int = 1,
    on_improvement: Callable[[int, float, np.ndarray], None] | None = None,
) -> PSOResult:
    """Maximise ``fitness`` with a particle swarm under an evaluation budget.

    ``fitness`` maps a ``(k, dim)`` batch of positions to ``k`` values.  Each
    iteration evaluates the whole swarm (the last one only as many particles
    as the budget allows) before any best is updated, so the trajectory does
    not depend on how evaluations are distributed.  ``map_batches`` (e.g. an
    executor's ``map``) receives ``fitness`` and ``n_chunks`` position chunks.
    Non-finite fitness counts as ``-inf``.
    """
    if n_particles < 1 or dim < 1:
        raise ConfigurationError("n_particles and dim must be positive")
    if budget < n_particles:
        raise ConfigurationError(f"budget {budget} is smaller than the swarm ({n_particles})")
    rng = np.random.default_rng(seed)
    swarm = Swarm.initialise(n_particles, dim, rng, bounds, inertia=inertia, cognitive=cognitive, social=social)
    while swarm.evaluations < budget:
        k = min(n_particles, budget - swarm.evaluations)
        batch = swarm.positions[:k]
        if map_batches is None:
            values = np.asarray(fitness(batch), dtype=float)
        else:
            chunks = np.array_split(batch, min(n_chunks, k))
            values = np.concatenate([np.asarray(v, dtype=float) for v in map_batches(fitness, chunks)])
        swarm.tell(np.arange(k), values, on_improvement)
        if swarm.evaluations < budget:
            swarm.move(rng)
    best = swarm.global_best
    return PSOResult(swarm.best_positions[best].copy(), float(swarm.best_fitness[best]), swarm.history, swarm.evaluations)
