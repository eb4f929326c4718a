"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """Invalid configuration value, key or campaign file."""


class IntegrityError(ValueError):
    """An error map entry does not resolve to an existing parameter element."""


class CheckpointError(ValueError):
    """Malformed, truncated or corrupted checkpoint file."""


class MetricError(ValueError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class TrainingError(RuntimeError):
    """Training aborted, e.g. because the loss became non-finite."""
