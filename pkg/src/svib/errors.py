"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Operand shapes are incompatible."""


class NumericDomainError(ArithmeticError):
    """A value left the domain of an operation (log of a non-positive
    number, overflowing exp, non-finite logits, ...)."""


class ContractError(ValueError):
    """A documented precondition of a function was violated."""


class ConfigError(ValueError):
    """Invalid run configuration. ``field`` holds the dotted field path."""

    def __init__(self, field, message):
        self.field = field
        super().__init__(f"{field}: {message}")


class TrainingError(RuntimeError):
    """Training aborted, e.g. because a gradient became non-finite."""
