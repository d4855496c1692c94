"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, data/format
problems -> 3, numeric failures -> 4.
"""


class GridCapsError(Exception):
    """Base class for all package errors."""


class ConfigError(GridCapsError):
    """Invalid configuration file, flag combination, or option value."""


class CaseParseError(GridCapsError):
    """Malformed case file. Carries the 1-based line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class StructuralError(GridCapsError):
    """Case data parsed but violates a structural invariant."""


class FormatError(GridCapsError):
    """Binary container (dataset / checkpoint) is corrupt or mismatched."""


class DataError(GridCapsError):
    """Missing or inconsistent dataset / model inputs."""


class NumericError(GridCapsError):
    """Numerical operation failed (singular system, no convergence, ...)."""


class ReductionError(NumericError):
    """Load-bus block could not be eliminated (singular partition)."""


class SamplingError(GridCapsError):
    """Scenario rejection budget exhausted. Carries the offending bus."""

    def __init__(self, message, bus=None):
        self.bus = bus
        super().__init__(message)


class TrainingError(NumericError):
    """Training aborted (non-finite loss or gradients)."""
