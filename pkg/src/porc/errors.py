"""Error taxonomy shared across the package.

CLI exit-code mapping: UsageError -> 1, DataFormatError (and other
PorcError subclasses raised while reading inputs) -> 2,
NumericalError -> 3.
"""


class PorcError(Exception):
    """Base class for all structured errors raised by this package."""


class ShapeError(PorcError):
    """An operation received operands with incompatible shapes."""


class GraphError(PorcError):
    """Misuse of the autodiff tape (non-scalar root, detached root, ...)."""


class NumericalError(PorcError):
    """A computation produced or received NaN/Inf where it must not."""


class DataFormatError(PorcError):
    """A file or record does not conform to its documented format."""


class UsageError(PorcError):
    """Invalid command-line or API usage."""


class MetricError(PorcError):
    """A metric is undefined for the given inputs (e.g. single-class AUC)."""


class ConfigError(PorcError):
    """Invalid configuration or hyperparameter combination."""
