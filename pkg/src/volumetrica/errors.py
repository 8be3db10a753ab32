"""Exception types shared across the package."""


class VolumetricaError(Exception):
    """Base class for all package-specific failures."""


class BodyFormatError(VolumetricaError):
    """Malformed body file; carries the offending line number."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DimensionMismatchError(VolumetricaError, ValueError):
    """Query point dimension does not match the body."""


class NumericalError(VolumetricaError):
    """Singular matrix, failed eigensolve, or estimator breakdown."""


class InvariantViolationError(VolumetricaError):
    """An algorithm invariant failed exactly (e.g. the inner-ball check).

    Carries the trace collected up to the failure for post-mortem.
    """

    def __init__(self, message, trace=None):
        self.trace = trace
        super().__init__(message)


class SamplingFailureError(VolumetricaError):
    """The sampler could not reach its target within the step budget."""

    def __init__(self, message, phase_log=None):
        self.phase_log = phase_log
        super().__init__(message)
