class StealTimeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(StealTimeError, ValueError):
    """An argument or configuration violates its declared constraints."""


class ClockError(StealTimeError):
    """The monotonic clock could not be read."""


class KernelUnavailableError(StealTimeError):
    """The native microbenchmark kernel could not be built or loaded."""


class SourceError(StealTimeError):
    """A load source could not be read or parsed.

    ``line`` carries the offending input line when one is known.
    """

    def __init__(self, message, line=None):
        super().__init__(message if line is None else f"{message}: {line!r}")
        self.line = line


class SimConfigError(StealTimeError):
    """A simulation was configured so that it cannot produce a result."""


class SessionAborted(StealTimeError):
    """A measurement session stopped early because its sink failed."""

    def __init__(self, message, delivered):
        super().__init__(f"{message} (delivered {delivered} samples)")
        self.delivered = delivered


class ScenarioError(StealTimeError):
    """A harness scenario could not be set up or run."""
