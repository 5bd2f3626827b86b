"""Exception hierarchy.

Two families matter to callers: ``ValidationError`` (bad input, CLI exit 2)
and ``NumericalFailure`` (a computation did not succeed, CLI exit 3).
"""


class ZKNFError(Exception):
    pass


class ValidationError(ZKNFError, ValueError):
    pass


class NumericalFailure(ZKNFError, ArithmeticError):
    pass


class UnsupportedPower(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class ParityMismatch(ValidationError):
    pass


class GridMismatch(ValidationError):
    pass


class DecayViolation(NumericalFailure):
    pass


class ConvergenceFailure(NumericalFailure):
    pass


class NearSingular(NumericalFailure):
    pass


class IdentityMismatch(NumericalFailure):
    def __init__(self, message, rows=()):
        super().__init__(message)
        self.rows = tuple(rows)


class ChainMismatch(NumericalFailure):
    pass


class NewtonDivergence(NumericalFailure):
    pass


class CollapsedToLineSoliton(NumericalFailure):
    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class NumericBlowup(NumericalFailure):
    def __init__(self, message, time=None):
        super().__init__(message)
        self.time = time


class OutOfNeighborhood(NumericalFailure):
    pass


class SingularS(NumericalFailure):
    pass


class BlowupReached(NumericalFailure):
    def __init__(self, message, t_star=None):
        super().__init__(message)
        self.t_star = t_star
