"""Exception types raised across the package."""


class GiniCeError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(GiniCeError, ValueError):
    """An experiment or solver configuration is inconsistent."""


class Infeasible(GiniCeError):
    """The constraint polytope is empty (epsilon below the minimum)."""


class IterationLimit(GiniCeError):
    """An iterative solver ran out of budget before certifying optimality.

    The best iterate found so far is attached as ``best``.
    """

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class FullSupportViolated(GiniCeError):
    """Full-support dual recovered a distribution with negative mass."""

    def __init__(self, message, best=None):
        super().__init__(message)
        self.best = best


class Unbounded(GiniCeError):
    """Linear program unbounded. Cannot happen on the probability simplex."""


class ZeroSupportRecommendation(GiniCeError):
    """A CE best response was requested for a policy the distribution never plays."""


class MissingInfoState(GiniCeError, KeyError):
    """A tabular policy lacks an information state that is reachable."""
