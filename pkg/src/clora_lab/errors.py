"""Exception types shared across the package."""


class InvalidStateError(RuntimeError):
    """Operation needs state the object does not have (e.g. no RegPair)."""


class ConvergenceError(RuntimeError):
    """An iterative method ran out of iterations.

    ``estimate`` holds the last iterate's value so callers can still use it.
    """

    def __init__(self, message, estimate):
        super().__init__(message)
        self.estimate = estimate


class TrainingError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, message, step):
        super().__init__(message)
        self.step = step


class ConfigError(ValueError):
    """Malformed or inconsistent experiment configuration."""


class CheckpointError(RuntimeError):
    """Checkpoint cannot be read, or belongs to a different config."""
