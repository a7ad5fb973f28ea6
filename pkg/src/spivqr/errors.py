"""Exception hierarchy shared across the package."""


class SpivqrError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(SpivqrError):
    """Dimensions of a requested object are not usable (e.g. lattice with < 2 cells)."""


class WeightMatrixError(SpivqrError):
    """A spatial weight matrix violates its invariants."""


class SingularFilterError(SpivqrError):
    """The spatial filter I - coef * W* is numerically singular."""


class DesignConstructionError(SpivqrError):
    """Panel data and weight matrices are mutually inconsistent."""


class InstrumentShapeError(SpivqrError):
    """A user-supplied instrument matrix has the wrong shape."""


class DataError(SpivqrError):
    """Input data contains non-finite or otherwise unusable values."""


class RankError(SpivqrError):
    """A regression design is rank deficient.

    ``columns`` names the offending column indices when they could be identified.
    """

    def __init__(self, message, columns=None):
        super().__init__(message)
        self.columns = tuple(columns) if columns is not None else ()


class WeightError(SpivqrError):
    """A distance-weighting matrix is not symmetric positive definite."""


class InferenceDegeneracyError(SpivqrError):
    """A matrix required for the asymptotic covariance is numerically singular."""


class PanelFormatError(SpivqrError):
    """A long-format panel CSV is malformed or has an incomplete unit/time rectangle."""


class ConfigError(SpivqrError):
    """Invalid CLI/config-file settings."""
