"""Exception hierarchy shared by all modules.

The CLI maps these onto its exit codes, so every failure a user can
provoke from a config file ends up as one of the classes below.
"""


class QbdcError(Exception):
    """Base class for all package errors."""


class InvalidParamsError(QbdcError, ValueError):
    """Model parameters violate their invariants.

    ``index`` names the first offending sequence position when the
    violation is index-specific (e.g. an unnormalised ``alpha_n, beta_n`` pair).
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class CriterionNotApplicable(QbdcError):
    """A certificate construction's hypotheses fail on the available window."""


class NoInvariantState(QbdcError):
    """No eigenvalue of the truncated predual is within tolerance of 1."""

    def __init__(self, message, closest_eigenvalue):
        super().__init__(message)
        self.closest_eigenvalue = closest_eigenvalue


class NonConvergence(QbdcError):
    """An iterative solver ran out of iterations."""

    def __init__(self, message, last_distance):
        super().__init__(message)
        self.last_distance = last_distance


class QuadratureBudgetError(QbdcError):
    """The quadrature rule cannot certify the requested accuracy."""

    def __init__(self, message, est_error):
        super().__init__(message)
        self.est_error = est_error


class SolverError(QbdcError):
    """A numerically computed state fails a hard sanity check."""
