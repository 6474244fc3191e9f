"""Exception hierarchy shared by every module."""


class NLBoxError(Exception):
    """Base class for all errors raised by nlbox."""


class ShapeError(NLBoxError, ValueError):
    """A table does not match its declared alphabet sizes."""


class SignalingError(NLBoxError, ValueError):
    """An operation needs a non-signaling system and got a signaling one."""


class InvalidPermutationError(NLBoxError, ValueError):
    """A row of a permutation family is not a bijection."""

    def __init__(self, x, y, row):
        self.x, self.y, self.row = x, y, tuple(row)
        super().__init__(f"f_xy for (x={x!r}, y={y!r}) is not a permutation: {self.row}")


class RationalizeError(NLBoxError, ValueError):
    """A floating table could not be repaired within tolerance."""


class NoReductionError(NLBoxError, ValueError):
    """Order-2 families are the base case and cannot be reduced further."""


class ResourceConsumedError(NLBoxError, RuntimeError):
    """A single-use box instance was queried twice."""


class ResourceExhaustedError(NLBoxError, RuntimeError):
    """A child source ran out of fresh instances."""


class ResourceCapError(NLBoxError, RuntimeError):
    """A computation would exceed a configured size cap."""

    def __init__(self, message, *, order=None, size=None, cap=None):
        self.order, self.size, self.cap = order, size, cap
        super().__init__(message)
