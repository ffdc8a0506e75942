"""Exception hierarchy shared by all modules."""


class SpdcError(Exception):
    pass


class DomainError(SpdcError, ValueError):
    """Input outside the validity window of a model."""


class UsageError(SpdcError, ValueError):
    """Operation called with arguments it does not support."""


class ModelError(SpdcError, RuntimeError):
    """Numerical model failed to produce a solution."""


class NoPhaseMatchingError(ModelError):
    pass


class NoSignalError(ModelError):
    pass


class SingularResolutionError(ModelError):
    pass


class ConfigError(SpdcError, ValueError):
    """Configuration failed validation; ``errors`` lists (field path, message) pairs."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in self.errors))
