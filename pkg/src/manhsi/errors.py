"""Exception hierarchy shared by all manhsi modules."""


class ManhsiError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(ManhsiError):
    """Shapes or axes of the operands do not line up."""


class GeometryError(ManhsiError):
    """A size constraint is violated (non-positive output extent,
    divisibility requirement, window larger than image, ...)."""


class ContractError(ManhsiError):
    """An API precondition was violated by the caller."""


class ConfigError(ManhsiError):
    """An invalid configuration value (unknown variant, odd channel
    count where an even one is required, malformed config text)."""


class NumericError(ManhsiError):
    """A non-finite value (NaN/Inf) was produced or consumed."""


class FormatError(ManhsiError):
    """A file does not conform to its binary format."""


class TrainingDivergence(ManhsiError):
    """Training aborted because the loss became non-finite."""
