"""Error types raised by the sot package."""


class SotError(Exception):
    """Base class for every error raised by this package."""


class ValidationError(SotError, ValueError):
    """Input failed a precondition check."""


class ZeroNormRow(ValidationError):
    def __init__(self, row):
        self.row = row
        super().__init__(f"row {row} has (near) zero L2 norm and cannot be normalized")


class NotNormalized(ValidationError):
    pass


class AlreadyMasked(ValidationError):
    pass


class InvalidPermutation(ValidationError):
    pass


class InvalidCost(ValidationError):
    pass


class Asymmetric(ValidationError):
    pass


class TooLarge(ValidationError):
    def __init__(self, n, limit):
        self.n = n
        super().__init__(f"n={n} exceeds the exhaustive-enumeration limit of {limit}")


class Infeasible(ValidationError):
    pass


class IndexOutOfRange(ValidationError, IndexError):
    pass


class ConfigMismatch(ValidationError):
    pass


class DegenerateInput(ValidationError):
    pass


class LengthMismatch(ValidationError):
    pass


class InvalidSpec(ValidationError):
    pass


class TargetTooLarge(ValidationError):
    pass


class InsufficientPoints(ValidationError):
    pass


class SingleClass(ValidationError):
    pass


class NumericalUnderflow(SotError, ArithmeticError):
    """A linear-domain kernel row or column sum vanished."""
