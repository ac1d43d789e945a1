"""Exception types raised across the package."""


class SegwaveError(Exception):
    """Base class for all package errors."""


class InvalidInputError(SegwaveError, ValueError):
    """Input violates a documented precondition."""


class DegenerateSegmentError(SegwaveError, ValueError):
    """A segment has zero energy, so its variance cannot be estimated."""


class NoCandidateError(SegwaveError, ValueError):
    """No admissible changepoint candidate exists."""


class ChainFailure(SegwaveError, RuntimeError):
    """The MCMC target returned NaN."""

    def __init__(self, iteration: int):
        super().__init__(f"target density returned NaN at iteration {iteration}")
        self.iteration = iteration


class WavFormatError(SegwaveError, ValueError):
    """Malformed or unsupported RIFF/WAVE content."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset
