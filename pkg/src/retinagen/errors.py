"""Exception taxonomy shared across the package."""


class DimensionError(ValueError):
    """Shapes that cannot compose; the message names the offending axes."""


class ConfigurationError(ValueError):
    """A parameter outside its documented domain."""


class ContractError(RuntimeError):
    """An API precondition violated by the caller."""


class NumericError(ArithmeticError):
    """Non-finite values, or a numerical routine that failed to converge."""


class DegenerateInputError(ValueError):
    """Input with too little variation to be meaningful (zero variance, N < 2)."""


class LabelError(ValueError):
    """Class label or index outside the known vocabulary."""


class FormatError(ValueError):
    """Malformed image file; the message carries the byte offset."""


class CheckpointError(RuntimeError):
    """Unreadable, corrupt, or mismatched checkpoint file."""
