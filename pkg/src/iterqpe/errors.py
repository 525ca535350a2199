"""Exception hierarchy shared by all modules."""


class IterQPEError(Exception):
    """Base class for every error raised by this package."""


class NotHermitianError(IterQPEError, ValueError):
    pass


class NotSquareError(IterQPEError, ValueError):
    pass


class NearDefectiveError(IterQPEError, ArithmeticError):
    """Eigenvector matrix too ill-conditioned to trust a diagonalization."""


class ConvergenceError(IterQPEError, ArithmeticError):
    pass


class OverflowRiskError(IterQPEError, ArithmeticError):
    pass


class DegenerateChannelError(IterQPEError, ValueError):
    """Two eigenspaces share parallel Kraus eigenvalue vectors."""


class DimensionCapError(IterQPEError, ValueError):
    pass


class ImpossibleTrajectoryError(IterQPEError, ArithmeticError):
    pass


class AliasingError(IterQPEError, ValueError):
    pass


class PeakCountError(IterQPEError, ValueError):
    pass


class DomainError(IterQPEError, ValueError):
    pass


class ConfigError(IterQPEError, ValueError):
    pass
