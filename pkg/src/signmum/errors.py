"""Exception types shared across the package."""

from __future__ import annotations


class SignmumError(Exception):
    """Base class for package-specific failures."""


class SchemaError(SignmumError):
    """A record or file violates the documented wire format."""


class DatasetError(SignmumError):
    """A dataset is missing, empty, or otherwise unusable as a whole."""


class ConfigError(SignmumError):
    """Configuration validation failed.

    Carries every violated constraint so a bad config is fixable in one pass.
    """

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class DependencyError(SignmumError):
    """A stage was invoked without an artifact produced by an earlier stage."""


class CheckpointError(SignmumError):
    """Base class for checkpoint load failures."""


class CheckpointIntegrityError(CheckpointError):
    """Checkpoint bytes are corrupt, truncated, or not a checkpoint at all."""


class CheckpointVersionError(CheckpointError):
    """Checkpoint was written by an incompatible format version."""


class CheckpointTypeError(CheckpointError):
    """Checkpoint holds a different kind of model than the caller expected."""


class TrainingDivergedError(SignmumError):
    """A training loss became non-finite."""
