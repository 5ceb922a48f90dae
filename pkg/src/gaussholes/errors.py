"""Exception hierarchy shared by all modules.

The CLI maps these onto exit codes: ``DomainError`` -> 2,
``NumericalError`` -> 3, ``ConvergenceError`` -> 4.
"""


class GaussHolesError(Exception):
    """Base class for errors raised by this package."""


class DomainError(GaussHolesError, ValueError):
    """An argument lies outside the domain of the requested operation."""


class NumericalError(GaussHolesError, ArithmeticError):
    """A matrix or quadrature failed a numerical sanity check."""


class ConvergenceError(GaussHolesError, RuntimeError):
    """An iterative solver stopped before meeting its tolerance.

    ``info`` carries whatever diagnostics the solver had at that point
    (residuals, last iterate, iteration count).
    """

    def __init__(self, message, info=None):
        super().__init__(message)
        self.info = {} if info is None else dict(info)
