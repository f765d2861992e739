"""Exception hierarchy shared by all modules."""


class SimulationError(Exception):
    """Base class for errors raised by this package."""


class InvalidDimensionError(SimulationError, ValueError):
    pass


class OutOfRangeError(SimulationError, IndexError):
    pass


class InvalidArgumentError(SimulationError, ValueError):
    pass


class SpaceMismatchError(SimulationError, ValueError):
    pass


class DataIntegrityError(SimulationError, ValueError):
    """A computed object violates one of its type invariants."""


class UnsupportedConfigurationError(SimulationError, ValueError):
    pass


class UndefinedRatioError(SimulationError, ZeroDivisionError):
    pass


class IntegrationError(SimulationError, RuntimeError):
    """The adaptive integrator could not advance; ``time`` is where it stopped."""

    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class ConfigError(SimulationError, ValueError):
    """Bad configuration input.  ``line`` is 1-based when known."""

    def __init__(self, message, line=None, key=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line
        self.key = key


class TruncationWarning(UserWarning):
    """Fock truncation discarded more probability than the tolerated tail."""


class DiagnosticsWarning(UserWarning):
    pass
