"""Exception hierarchy shared by all rtlab modules."""


class RtlabError(Exception):
    """Base class for every error raised by rtlab."""


class ConfigError(RtlabError, ValueError):
    """Invalid user input: parameters, scenario files, grids."""


class InvalidDimensionError(ConfigError):
    pass


class ProfileError(ConfigError):
    """A chemoattractant profile failed construction or its consistency check."""


class HypothesisViolationError(RtlabError):
    """A standing assumption on the model (confinement, integral bound, ...) fails."""


class UnsupportedResponseError(RtlabError):
    """The response function lacks a property the requested operation needs."""


class NumericalError(RtlabError):
    """Base class for failures of a numerical method."""


class QuadratureError(NumericalError):
    pass


class NumericalInstabilityError(NumericalError):
    pass


class NonConvergenceError(NumericalError):
    """An iteration did not reach its tolerance.

    ``history`` carries whatever residual trajectory was recorded.
    """

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = list(history) if history is not None else []


class DivergenceError(NonConvergenceError):
    pass


class InsufficientDecayError(NumericalError):
    pass


class NormalizationError(NumericalError):
    pass


class InfeasibleRadiusError(ConfigError):
    pass


class ResourceError(RtlabError):
    """A requested computation would exceed the configured memory budget."""


class CertificateFailure(RtlabError):
    """Raised by the CLI when a verification ran but did not pass."""
