"""Exception types shared by the solvers and the command-line frontend."""


class Bec3Error(Exception):
    """Base class for toolkit errors."""


class PreconditionError(Bec3Error, ValueError):
    """An input violates a documented precondition."""


class ConvergenceError(Bec3Error, RuntimeError):
    """An iterative solver failed; ``trace`` holds the iteration history."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class MemoryCapError(Bec3Error, MemoryError):
    """A grid solve would exceed the configured memory budget."""

    def __init__(self, message, estimate_bytes, cap_bytes):
        super().__init__(message)
        self.estimate_bytes = int(estimate_bytes)
        self.cap_bytes = int(cap_bytes)


class ConfigError(Bec3Error, ValueError):
    """Configuration could not be parsed or validated."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location
