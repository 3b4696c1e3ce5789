# -*- coding: utf-8 -*-
"""Error types raised by the numeric core, memory, data and metric modules."""


class BilevelContinualError(Exception):
    pass


class ShapeError(BilevelContinualError, ValueError):
    pass


class TaskIdError(BilevelContinualError, ValueError):
    pass


class ParameterError(BilevelContinualError, ValueError):
    pass


class LabelError(BilevelContinualError, ValueError):
    pass


class UsageError(BilevelContinualError, ValueError):
    pass


class NonFiniteError(BilevelContinualError, ArithmeticError):
    pass


class IdxFormatError(BilevelContinualError, ValueError):
    pass


class ConsistencyError(BilevelContinualError, ValueError):
    pass


class TruncatedFileError(BilevelContinualError, OSError):
    pass


class IncompleteMatrixError(BilevelContinualError, ValueError):
    pass


class UndefinedMetricError(BilevelContinualError, ValueError):
    pass


class MemoryInvariantError(BilevelContinualError, RuntimeError):
    pass
