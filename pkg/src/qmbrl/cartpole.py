"""Cart-pole dynamics (explicit Euler) and the shaped reward.

States are float arrays ordered ``(x, x_dot, theta, theta_dot)``; batched
functions take arrays of shape ``(n, 4)``.  Action 1 pushes right, 0 pushes
left.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .exceptions import DomainError

STATE_FIELDS = ("x", "x_dot", "theta", "theta_dot")
X_LIMIT = 2.4
THETA_LIMIT = 0.2095
X_CENTER = 0.5
THETA_UPRIGHT = 0.05
RESET_BOUND = 0.05
MAX_EPISODE_STEPS = 500


class CartPoleState(NamedTuple):
    x: float
    x_dot: float
    theta: float
    theta_dot: float


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_magnitude: float = 10.0
    time_step: float = 0.02

    def __post_init__(self):
        for name, v in vars(self).items():
            if not v > 0:
                raise ValueError(f"{name} must be positive, got {v}")


DEFAULT_PHYSICS = PhysicsParams()


def reset(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Start state(s) with every component uniform in [-0.05, 0.05]."""
    size = (4,) if n is None else (n, 4)
    return rng.uniform(-RESET_BOUND, RESET_BOUND, size=size)


def step_batch(states, actions, physics: PhysicsParams = DEFAULT_PHYSICS) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`step` over ``(n, 4)`` states and ``(n,)`` actions."""
    s = np.asarray(states, dtype=float)
    if not np.all(np.isfinite(s)):
        raise DomainError("cart-pole state must be finite")
    a = np.asarray(actions)
    x, x_dot, theta, theta_dot = s[..., 0], s[..., 1], s[..., 2], s[..., 3]
    total_mass = physics.pole_mass + physics.cart_mass
    polemass_length = physics.pole_mass * physics.pole_half_length
    force = np.where(a == 1, physics.force_magnitude, -physics.force_magnitude)
    costheta = np.cos(theta)
    sintheta = np.sin(theta)
    temp = (force + polemass_length * theta_dot**2 * sintheta) / total_mass
    thetaacc = (physics.gravity * sintheta - costheta * temp) / (
        physics.pole_half_length * (4.0 / 3.0 - physics.pole_mass * costheta**2 / total_mass)
    )
    xacc = temp - polemass_length * thetaacc * costheta / total_mass
    tau = physics.time_step
    nxt = np.stack(
        [x + tau * x_dot, x_dot + tau * xacc, theta + tau * theta_dot, theta_dot + tau * thetaacc],
        axis=-1,
    )
    return nxt, is_terminal(nxt)


def step(state, action: int, physics: PhysicsParams = DEFAULT_PHYSICS) -> tuple[np.ndarray, bool]:
    """One Euler step: returns ``(next_state, terminated)``."""
    nxt, term = step_batch(np.asarray(state, dtype=float), np.asarray(action), physics)
    return nxt, bool(term)


def is_terminal(states) -> np.ndarray | bool:
    s = np.asarray(states, dtype=float)
    return (np.abs(s[..., 0]) > X_LIMIT) | (np.abs(s[..., 2]) > THETA_LIMIT)


def reward_batch(states) -> np.ndarray:
    """Shaped reward per state; the failure branch is checked first and
    non-finite states earn 0."""
    s = np.asarray(states, dtype=float)
    ax, ath = np.abs(s[..., 0]), np.abs(s[..., 2])
    failed = (ax > X_LIMIT) | (ath > THETA_LIMIT) | ~np.all(np.isfinite(s), axis=-1)
    centered = (ax < X_CENTER) & (ath < THETA_UPRIGHT)
    return np.where(failed, 0.0, np.where(centered, 1.0, 0.5))


def reward(state) -> float:
    """1 if centred and upright, 0 if out of bounds, 0.5 otherwise."""
    return float(reward_batch(state))


class CartPoleEnv:
    """Stateful episode wrapper with termination and 500-step truncation."""

    def __init__(self, seed=None, physics: PhysicsParams = DEFAULT_PHYSICS, max_steps: int = MAX_EPISODE_STEPS):
        self.physics = physics
        self.max_steps = max_steps
        self.rng = np.random.default_rng(seed)
        self.state = None
        self.steps = 0

    def reset(self) -> np.ndarray:
        self.state = reset(self.rng)
        self.steps = 0
        return self.state.copy()

    def step(self, action: int) -> tuple[np.ndarray, float, bool, bool]:
        """Returns ``(state, reward, terminated, truncated)``."""
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        self.state, terminated = step(self.state, action, self.physics)
        self.steps += 1
        truncated = not terminated and self.steps >= self.max_steps
        return self.state.copy(), reward(self.state), terminated, truncated

