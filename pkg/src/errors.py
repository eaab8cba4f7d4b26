class PersuasionError(Exception):
    """Base class for every error raised by the checker library."""


class DomainError(PersuasionError):
    """A state or action lies outside the model's domain rectangle."""


class NoInteriorRoot(PersuasionError):
    """The expected marginal utility has no sign change on the action domain."""


class ConcavityViolation(PersuasionError):
    """U_aa is not strictly negative where the checkers need it."""


class MissingDerivatives(PersuasionError):
    """Higher partials are neither closed-form nor reachable by finite differences."""


class InvalidParams(PersuasionError):
    """Model family parameters break the family's assumptions."""


class NotLinearReceiver(PersuasionError):
    """The receiver's marginal utility is not proportional to (state - action)."""


class MonotonicityViolation(PersuasionError):
    """A change-of-variables map is not monotone on its sample points."""


class NoOpposingStates(PersuasionError):
    """No pair of support states pulls the pooled action in opposite directions."""


class InfeasibleWeights(PersuasionError):
    """The three-message weight balance has no admissible solution."""


class DegenerateSimplex(PersuasionError):
    """Posterior simplex built on duplicate states."""


class ConfigError(PersuasionError):
    """Malformed or inconsistent run configuration."""


class UnsupportedSupportSize(PersuasionError):
    """The oracle only handles priors with two or three support states."""
