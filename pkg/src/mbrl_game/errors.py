"""
Exception hierarchy for mbrl-game.

Every error raised on purpose by the package derives from MbrlGameError so the
CLI can map it to an exit code without catching unrelated failures.
"""


class MbrlGameError(Exception):
    """Base class for all package errors."""


class ConfigError(MbrlGameError, ValueError):
    """Invalid or unparsable configuration. Carries the offending field."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        if field:
            message = f"{field}: {message}"
        super().__init__(message)


class NonConvergenceError(MbrlGameError, RuntimeError):
    """An iterative solver hit its iteration cap."""


class SupportViolationError(MbrlGameError, ValueError):
    """KL requested where q has zero mass but p does not."""


class SimulationError(MbrlGameError, RuntimeError):
    """An environment stepper produced a non-finite state."""


class ModelTrainingError(MbrlGameError, RuntimeError):
    """Dynamics model training produced a non-finite loss."""


class DivergenceError(MbrlGameError, RuntimeError):
    """A training run diverged beyond the retry policy."""


class CheckpointError(MbrlGameError, RuntimeError):
    """A checkpoint directory is missing required pieces."""
