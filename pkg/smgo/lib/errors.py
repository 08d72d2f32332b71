class SMGOError(Exception):
    """Base class for every error raised by the optimizer and its harness."""


class DuplicatePoint(SMGOError, ValueError):
    pass


class OutOfBounds(SMGOError, ValueError):
    pass


class NonFiniteValue(SMGOError, ValueError):
    pass


class DimensionTooLarge(SMGOError, ValueError):
    pass


class UnknownFunction(SMGOError, ValueError):
    pass


class EmptyHistory(SMGOError):
    pass


class ZeroDistance(SMGOError):
    pass


class TooFewSamples(SMGOError):
    pass


class Infeasible(SMGOError, RuntimeError):
    """Exploitation found no candidate meeting the best-cone constraint.

    The constraint is provably satisfiable, so this signals a bug rather than a
    state callers should handle.
    """


class PoolExhausted(SMGOError, RuntimeError):
    pass


class BudgetExhausted(SMGOError, RuntimeError):
    pass


class ProtocolViolation(SMGOError, RuntimeError):
    pass
