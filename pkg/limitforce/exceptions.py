"""Error kinds raised by the library; the CLI maps them to exit statuses"""
from typing import Any, Dict, Optional


class LimitForceError(Exception):
    """Base class for every library error"""


class InvalidArgumentError(LimitForceError, ValueError):
    """Argument violates an operation precondition"""


class UnsupportedSizeError(LimitForceError):
    """Requested order exceeds an enumeration cap"""


class UnsupportedFormError(LimitForceError):
    """Operation is not defined for this permuton or graphon representation"""


class SingularJacobianError(LimitForceError):
    """Newton step hit a (numerically) singular Jacobian"""

    def __init__(self, message: str, determinant: float, iterate: Optional[list] = None):
        super().__init__(message)
        self.determinant = determinant
        self.iterate = list(iterate) if iterate is not None else []


class WitnessGuardError(LimitForceError):
    """An iterate left the positive, strictly decreasing region (triggers epsilon halving)"""

    def __init__(self, message: str, epsilon: float):
        super().__init__(message)
        self.epsilon = epsilon


class CertificationFailedError(LimitForceError):
    """A witness certification check failed"""

    def __init__(self, message: str, check: str, index: Optional[Any] = None,
                 report: Optional[Dict] = None):
        super().__init__(message)
        self.check = check
        self.index = index
        self.report = report
