"""Exception types raised across the package."""


class FBBAIError(Exception):
    """Base class for all package errors."""


class DomainError(FBBAIError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigError(FBBAIError, ValueError):
    """A configuration (budget, schedule, sampling box, ...) is unusable."""


class ResourceError(FBBAIError, RuntimeError):
    """A requested computation exceeds a size guard."""


class SamplingError(FBBAIError, RuntimeError):
    """Rejection sampling failed to produce an accepted draw."""


class PolicyError(FBBAIError, RuntimeError):
    """A policy could not produce a decision; aborts the current trial."""


class InsufficientFailuresError(FBBAIError, ValueError):
    """Too few observed failures to fit a decay rate."""


class CheckpointError(FBBAIError, ValueError):
    """A model or table file is malformed or inconsistent."""


class ContractError(DomainError):
    """A user-supplied rule returned something outside its contract."""
