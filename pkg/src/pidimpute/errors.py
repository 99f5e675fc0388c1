"""Exception types shared across the package."""


class PidImputeError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(PidImputeError, ValueError):
    """Invalid configuration. `path` is the dotted field path, when known."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class ParameterDomainError(PidImputeError, ValueError):
    """Model parameters outside their feasible domain."""


class FactorizationError(PidImputeError, RuntimeError):
    """A required positive-definite factorization failed.

    Carries the offending component index and, when relevant, the observed
    pattern of the row being processed.
    """

    def __init__(self, message, component=None, pattern=None, row=None):
        self.component = component
        self.pattern = pattern
        self.row = row
        super().__init__(message)


class DegenerateComponentError(PidImputeError, RuntimeError):
    """A mixture component collapsed (total responsibility below floor)."""

    def __init__(self, message, component=None):
        self.component = component
        super().__init__(message)


class DegenerateSkewError(PidImputeError, RuntimeError):
    """Skewness update denominator fell below floor."""

    def __init__(self, message, component=None):
        self.component = component
        super().__init__(message)


class NeverObservedColumnError(PidImputeError, ValueError):
    """A column has no observed entries, so its statistics are unidentifiable."""

    def __init__(self, message, column=None):
        self.column = column
        super().__init__(message)


class SchemaMismatchError(PidImputeError, ValueError):
    """Dataset and model (or two datasets) have incompatible shapes."""


class TrainingDivergedError(PidImputeError, RuntimeError):
    """Network training produced a non-finite loss."""

    def __init__(self, message, iteration=None):
        self.iteration = iteration
        super().__init__(message)


class MissingSpeciesError(PidImputeError, ValueError):
    """A required species is absent from a labeled sample."""

    def __init__(self, message, species=None):
        self.species = species
        super().__init__(message)


class ImputationFailedError(PidImputeError, RuntimeError):
    """An imputation strategy failed after exhausting its retries."""
