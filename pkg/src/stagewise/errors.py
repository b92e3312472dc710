"""Exception types shared across the package."""


class StagewiseError(Exception):
    """Base class for package-specific failures."""


class ConfigError(StagewiseError):
    """Invalid experiment configuration (schema violation, unknown keys, bad values)."""


class InfeasibleSetError(StagewiseError):
    """Permutation-set construction could not satisfy the requested constraints."""


class CheckpointMismatchError(StagewiseError):
    """Checkpoint architecture fingerprint does not match the requested configuration."""
