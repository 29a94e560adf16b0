class BufferSimError(Exception):
    """Base class for all errors raised by this package."""


class ParameterError(BufferSimError, ValueError):
    pass


class InvalidCutoffError(ParameterError):
    pass


class DomainError(ParameterError):
    pass


class ConfigError(BufferSimError, ValueError):
    pass


class FitError(BufferSimError, RuntimeError):
    pass


class IntegrationError(BufferSimError, RuntimeError):
    """Raised when time propagation fails or leaves the physical state space.

    ``time`` holds the simulation time (ps) at which the failure was
    detected, when known.
    """

    def __init__(self, message, time=None):
        super().__init__(message if time is None else f"{message} (t = {time:.6g} ps)")
        self.time = time


class ResourceError(BufferSimError, MemoryError):
    pass
