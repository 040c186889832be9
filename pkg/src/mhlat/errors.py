"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Operand shapes are incompatible with the requested operation."""


class ConfigError(ValueError):
    """A hyperparameter or CLI configuration value is out of range."""


class DataError(ValueError):
    """Malformed or inconsistent corpus/vocabulary/checkpoint content."""


class TrainingDiverged(RuntimeError):
    """The training loss became non-finite; carries diagnostics."""
