"""Exception hierarchy shared across the engine."""


class PairdistillError(Exception):
    """Base class for all engine errors."""


class InputError(PairdistillError):
    """Caller supplied invalid input (bad argument, malformed file, ...)."""


class DegeneratePairError(InputError):
    """A metric was asked to score an empty-sided pair."""


class TransportError(PairdistillError):
    """A remote backend is unreachable or timed out after retries."""


class ProtocolError(PairdistillError):
    """A remote backend replied with a malformed or out-of-contract body."""


class DatasetValidationError(PairdistillError):
    """A dataset record failed an integrity re-check."""
