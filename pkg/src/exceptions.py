"""
Exception types for the CP-FBMA toolkit
Configuration problems and numerical failures are kept apart so the
command line can map them to distinct exit codes.
"""


class CpfbmaError(Exception):
    """Base class for all toolkit errors"""
    pass


class ConfigError(CpfbmaError):
    """Raised when a configuration object violates one of its invariants"""
    pass


class NumericalError(CpfbmaError):
    """Raised when a numerical kernel cannot produce a valid result"""
    pass


class NotHermitianError(NumericalError):
    """Input matrix is not Hermitian within tolerance"""
    pass


class NotPsdError(NumericalError):
    """Input matrix has an eigenvalue below the PSD tolerance"""
    pass


class SingularUpdateError(NumericalError):
    """Rank-one inverse update would produce a singular matrix"""
    pass


class DegenerateVectorError(NumericalError):
    """A vector that must be normalized has (near) zero length"""
    pass


class RankDeficiencyError(NumericalError):
    """Matrix pencil is rank deficient even after regularization"""

    def __init__(self, message, deficiency=0):
        super().__init__(message)
        self.deficiency = deficiency


class NumericalWarning(UserWarning):
    """Recoverable numerical anomaly (ridge applied, dense fallback, ...)"""
    pass
