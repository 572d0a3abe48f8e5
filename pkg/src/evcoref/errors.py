"""Exception types shared across the package.

The CLI maps these onto process exit codes; library code raises them
directly so callers can distinguish bad input from internal failures.
"""


class EvcorefError(Exception):
    """Base class for all package errors."""


class ParseError(EvcorefError):
    """Malformed record in an input file; carries the offending line number."""

    def __init__(self, path, line_no, message):
        self.path = str(path)
        self.line_no = line_no
        super().__init__(f"{self.path}:{line_no}: {message}")


class IntegrityError(EvcorefError):
    """Structurally valid input that violates a corpus invariant."""


class ConfigError(EvcorefError):
    """Inconsistent or incomplete run configuration."""


class ModelMismatchError(EvcorefError):
    """Checkpoint, feature matrix, or model dimensions disagree."""


class ScoringMismatchError(EvcorefError):
    """Gold and system clusterings do not cover the same mention set."""


class TrainingDivergedError(EvcorefError):
    """Loss became non-finite during training."""


class SamplerError(EvcorefError):
    """Training data cannot supply both coreferent and non-coreferent pairs."""
