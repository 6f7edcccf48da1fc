"""Exception hierarchy shared by the library and the CLI."""


class FracEvolError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class DomainError(FracEvolError, ValueError):
    """Argument outside the domain of a function."""

    exit_code = 2


class ConfigError(FracEvolError):
    exit_code = 2


class AccuracyCeilingError(FracEvolError):
    """Requested evaluation lies beyond the documented accuracy range."""

    exit_code = 6


class SeriesConvergenceError(AccuracyCeilingError):
    pass


class EllipticityError(FracEvolError):
    exit_code = 2


class SpectralError(FracEvolError):
    """Matrix not diagonalizable with real negative spectrum."""


class ResolventError(FracEvolError):
    pass


class QuadratureError(FracEvolError):
    pass


class VolterraConvergenceError(FracEvolError):
    exit_code = 4


class PreconditionError(FracEvolError):
    exit_code = 3

    def __init__(self, message, measured=None):
        super().__init__(message)
        self.measured = measured


class NonContractionError(FracEvolError):
    exit_code = 4

    def __init__(self, message, ratios=None):
        super().__init__(message)
        self.ratios = ratios or []


class WindowTooLongError(FracEvolError):
    exit_code = 4

    def __init__(self, message, weighted_sup=None):
        super().__init__(message)
        self.weighted_sup = weighted_sup
