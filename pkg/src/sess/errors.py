"""Exception types raised by the package."""


class SessError(Exception):
    """Base class for all package errors."""


class InvalidArgs(SessError, ValueError):
    pass


class DimensionMismatch(SessError, ValueError):
    pass


class ConstantColumn(SessError, ValueError):
    def __init__(self, index: int):
        super().__init__(f"column {index} has zero variance")
        self.index = index


class ZeroColumn(SessError, ValueError):
    pass


class IndexOutOfRange(SessError, IndexError):
    pass


class EmptyGroup(SessError, ValueError):
    pass


class AllBlocksExcluded(SessError):
    pass


class PerfectFit(SessError, ArithmeticError):
    """A residual sum of squares vanished, so its logarithm is undefined."""


class Overcapacity(SessError):
    """A response column would need at least ``n`` predictors."""


class InvalidConfig(SessError, ValueError):
    pass


class InfeasiblePartition(SessError, ValueError):
    pass
