"""Exception types raised across the package."""


class ConfigurationError(ValueError):
    """Invalid hyperparameters, shapes, indices or arities."""


class DomainError(ValueError):
    """A physical state outside the domain of the dynamics (e.g. non-finite)."""


class TrainingError(RuntimeError):
    """Optimisation produced a non-finite loss or gradient."""


class SchemaVersionError(ValueError):
    """A persisted artifact was written with an incompatible schema version."""
