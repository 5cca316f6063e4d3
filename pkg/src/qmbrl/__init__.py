"""Offline model-based reinforcement learning with variational quantum circuits on cart-pole."""
from .baseline import MLPRegressor
from .dataset import DynamicsScaler
from .exceptions import ConfigurationError, DomainError, SchemaVersionError, TrainingError
from .policy import ModelBasedPolicySearch, VQCPolicy
from .surrogate import SurrogateModel, VQCRegressor
from .vqc import VqcTemplate

__version__ = "0.1.0"

__all__ = [
    "ConfigurationError",
    "DomainError",
    "DynamicsScaler",
    "MLPRegressor",
    "ModelBasedPolicySearch",
    "SchemaVersionError",
    "SurrogateModel",
    "TrainingError",
    "VQCPolicy",
    "VQCRegressor",
    "VqcTemplate",
]
