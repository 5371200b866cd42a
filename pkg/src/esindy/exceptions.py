"""Exception hierarchy.

Input problems (bad data, bad parameters, bad files) derive from
:class:`InputError`; numerical breakdowns derive from :class:`NumericalError`.
The CLI maps the two families to distinct exit codes.
"""


class EsindyError(Exception):
    """Base class for all package errors."""


class InputError(EsindyError, ValueError):
    """Invalid user-supplied data or arguments."""


class SpecError(InputError):
    """A library / model specification is inconsistent or empty."""


class ParameterError(InputError):
    """A scalar parameter is outside its admissible range."""


class ShapeError(InputError):
    """Array dimensions do not agree."""


class InsufficientDataError(InputError):
    """Too few samples or grid points for the requested operation."""


class IngestionError(InputError):
    """A data file is missing or malformed."""


class ConfigError(InputError):
    """A configuration file or mapping contains unknown or invalid keys."""


class NumericalError(EsindyError, ArithmeticError):
    """A numerical procedure failed."""


class DivergenceError(NumericalError):
    """A simulated trajectory became non-finite."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class UndefinedMetricError(NumericalError):
    """A metric is undefined for the given inputs (e.g. zero reference)."""


class EsindyWarning(UserWarning):
    """Base class for package warnings."""


class CoverageWarning(EsindyWarning):
    """Some ensemble trajectories diverged; bands use fewer draws."""


class ConvergenceWarning(EsindyWarning):
    """An iterative procedure stopped without improvement."""
