"""Exception hierarchy shared by every pipeline stage.

The CLI maps the three top-level families onto process exit codes:
``ConfigError`` -> 2, ``DataError`` -> 3, ``ValidationFailure`` -> 4.
Numerical contract errors also subclass ``ValueError`` so library callers
can catch them without importing this module.
"""

from __future__ import annotations

from typing import Optional

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_VALIDATION = 4


class EnsembleError(Exception):
    """Base class for all errors raised by this package."""

    exit_code = EXIT_UNEXPECTED


class ConfigError(EnsembleError, ValueError):
    """Experiment or bounds configuration is invalid."""

    exit_code = EXIT_CONFIG


class DataError(EnsembleError, ValueError):
    """Input data could not be parsed or assembled.

    Args:
        message: Human readable description.
        path: File the problem was found in, if any.
        line: 1-based line number inside ``path`` (header is line 1).
        code: Series code the row belongs to.
    """

    exit_code = EXIT_DATA

    def __init__(
        self,
        message: str,
        *,
        path: Optional[str] = None,
        line: Optional[int] = None,
        code: Optional[str] = None,
    ) -> None:
        self.path = path
        self.line = line
        self.code = code
        location = []
        if code is not None:
            location.append("series={}".format(code))
        if path is not None:
            location.append("file={}".format(path))
        if line is not None:
            location.append("line={}".format(line))
        if location:
            message = "{} [{}]".format(message, ", ".join(location))
        super().__init__(message)


class TransformError(DataError):
    """A transformation code could not be applied to a series."""


class MissingObservationError(DataError):
    """A sub-period observation needed for state alignment is missing."""

    def __init__(self, group: int, period: int, sub_index: int, name: str = "") -> None:
        self.group = group
        self.period = period
        self.sub_index = sub_index
        label = " ({})".format(name) if name else ""
        super().__init__(
            "Missing observation for group q={}{} at tempo index (t={}, s={})".format(group, label, period, sub_index)
        )


class ValidationFailure(EnsembleError):
    """A validation contract did not hold (FAIL rows, simplex violations)."""

    exit_code = EXIT_VALIDATION


class DimensionMismatchError(EnsembleError, ValueError):
    """Array shapes disagree."""


class SimplexError(EnsembleError, ValueError):
    """A weight vector is not a probability vector."""


class RateError(EnsembleError, ValueError):
    """A learning rate is undefined or nonpositive."""


class RankDeficiencyError(EnsembleError, ValueError):
    """Normal equations are singular (lambda = 0 on a rank deficient design)."""


class NotFittedError(EnsembleError, ValueError):
    """A model was used for forecasting before its readout was fitted."""


class ReservoirSamplingError(EnsembleError, ValueError):
    """Random reservoir draws stayed degenerate after the retry budget."""


class NonFiniteInputError(EnsembleError, ValueError):
    """NaN or infinite values reached a numerical routine."""


class EnsembleSizeError(EnsembleError, ValueError):
    """Ensemble size is incompatible with its allocation rule."""


class InsufficientDataError(EnsembleError, ValueError):
    """Too few rows for a fit or a cross-validation scheme."""


class BoundError(EnsembleError, ValueError):
    """A regret bound is undefined for the given inputs."""
