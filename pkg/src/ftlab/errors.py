"""Exception hierarchy shared by every ftlab module."""


class FtlabError(Exception):
    """Base class for all library errors."""


class ConfigurationError(FtlabError, ValueError):
    """Invalid parameters, malformed config files or infeasible constants."""

    def __init__(self, message, key=None):
        self.key = key
        if key is not None:
            message = f"{key}: {message}"
        super().__init__(message)


class StencilError(FtlabError):
    """A finite-difference stencil reached outside the node set."""


class ResolutionError(FtlabError, ValueError):
    """The grid cannot resolve the requested length scale."""


class EllipticityError(FtlabError):
    """An operator violated its declared (lambda, Lambda) ellipticity band."""

    def __init__(self, message, witness=None, report=None):
        super().__init__(message)
        self.witness = witness
        self.report = report


class NonConvergenceError(FtlabError):
    """An iteration exhausted its budget; ``diagnostics`` holds the history."""

    def __init__(self, message, diagnostics=None, partial=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.partial = partial


class NumericalFailureError(FtlabError):
    """NaN or overflow appeared in an iterate."""

    def __init__(self, message, diagnostics=None, partial=None):
        super().__init__(message)
        self.diagnostics = diagnostics
        self.partial = partial


class ComparisonViolation(FtlabError):
    """A discrete subsolution exceeded a supersolution somewhere."""

    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness
