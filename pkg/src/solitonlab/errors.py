"""Exception hierarchy shared across the package."""


class SolitonLabError(Exception):
    pass


class DomainError(SolitonLabError):
    """A point or path left the chart domain of a model."""


class GeometryError(SolitonLabError):
    """Metric data is degenerate (e.g. not positive definite)."""


class SpecError(SolitonLabError):
    """An invalid model or potential specification."""


class ConstructionError(SolitonLabError):
    """A model could not be built (e.g. Bryant shooting degenerated)."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IntegrationError(SolitonLabError):
    pass


class NonConvergenceError(SolitonLabError):
    pass


class UsageError(SolitonLabError):
    """An operation was called outside its documented preconditions."""


class DataError(SolitonLabError):
    pass


class InsufficientDataError(SolitonLabError):
    pass


class ConfigError(SolitonLabError):
    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
