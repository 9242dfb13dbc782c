"""Exception types shared across the package.

Plain ``ValueError`` is used for domain/invalid-input errors; the classes
here cover the cases the command line maps to dedicated exit codes.
"""

__all__ = ["ConfigError", "IngestionError", "NumericalError"]


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (exit code 2)."""


class IngestionError(ValueError):
    """A dataset or chain file failed validation (exit code 3)."""


class NumericalError(RuntimeError):
    """A numerical routine failed beyond recovery (exit code 4).

    Parameters
    ----------
    message : str
        Human-readable description of the failure.
    ladder : sequence of float, optional
        The jitter values attempted before giving up, when the failure
        came from a factorization ladder.
    """

    def __init__(self, message, ladder=None):
        super().__init__(message)
        self.ladder = tuple(ladder) if ladder is not None else None
