"""Exception hierarchy shared across the package."""


class DrawdownError(Exception):
    """Base class for all package errors."""


class InvalidParams(DrawdownError):
    """One or more model parameters violate their bounds."""

    def __init__(self, violations):
        if isinstance(violations, str):
            violations = [violations]
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class IllPosed(DrawdownError):
    """R <= R*: the problem admits strategies with infinite expected utility."""


class WellPosed(DrawdownError):
    """The ill-posedness construction was requested for R > R*."""


class RootNotBracketed(DrawdownError):
    """A root finder found no sign change on its bracket."""


class OrderingViolation(DrawdownError):
    """The region boundaries b/r < x_kink < x_one < a are out of order."""


class DomainError(DrawdownError):
    """An evaluation point lies outside the function's domain."""


class Bankruptcy(DrawdownError):
    """Wealth went negative under a user-supplied strategy."""


class ConfigError(DrawdownError):
    """A run configuration is malformed."""
