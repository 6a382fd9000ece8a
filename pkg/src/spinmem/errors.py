"""Exception hierarchy shared by all modules."""


class SpinMemError(Exception):
    """Base class for every error raised by the package."""


class InvalidArgument(SpinMemError, ValueError):
    pass


class DivergentMomentError(SpinMemError, ArithmeticError):
    """A spectral moment does not converge on the requested support."""


class AccuracyError(SpinMemError, ArithmeticError):
    """A numerical routine could not reach its accuracy target.

    ``diagnostics`` carries whatever the routine knew when it gave up.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class GridCoverageError(SpinMemError, ValueError):
    """A tabulated grid does not cover the region it is used on."""


class DegenerateSubensembleError(SpinMemError, ArithmeticError):
    """The selected subensemble has no spins (or the pulse has no energy)."""


class InfeasibleProblem(SpinMemError, ValueError):
    pass


class ConfigError(SpinMemError, ValueError):
    """Job configuration is malformed or refers to missing inputs."""
