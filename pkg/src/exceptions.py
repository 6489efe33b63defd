"""
Error hierarchy. Every error carries the CLI exit code it maps to:
2 = input error, 3 = shape error, 4 = numeric failure.
"""
from typing import Optional

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SHAPE = 3
EXIT_NUMERIC = 4

class EquisparseError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str, exit_code: Optional[int] = None):
        super().__init__(detail)
        self.detail = detail
        if exit_code is not None:
            self.exit_code = exit_code

    def __repr__(self):
        return f"<{type(self).__name__}(exit_code={self.exit_code}, detail='{self.detail}')>"

# ===============================
# Input errors (exit 2)
# ===============================

class InputError(EquisparseError):
    exit_code = EXIT_INPUT

class EmptyInput(InputError):
    pass

class MalformedInput(InputError):
    pass

class CycleDetected(InputError):
    pass

class DuplicateLeafColumn(InputError):
    pass

class MissingLeafColumn(InputError):
    def __init__(self, col: int):
        super().__init__(f"Feature column {col} is not the leaf of any tree node")
        self.col = col

class DanglingParent(InputError):
    def __init__(self, node_id: str):
        super().__init__(f"Parent '{node_id}' is referenced but never declared")
        self.node_id = node_id

class TooFewInternalNodes(InputError):
    pass

class CannotDeleteRoot(InputError):
    pass

class CannotDeleteLeaf(InputError):
    pass

class NegativeLambda(InputError):
    pass

class NonBinaryResponse(InputError):
    pass

class FoldTooSmall(InputError):
    pass

class UnknownVariant(InputError):
    pass

class IndivisibleSizes(InputError):
    pass

class DeltaOutOfRange(InputError):
    pass

class OutOfRange(InputError):
    pass

# ===============================
# Shape errors (exit 3)
# ===============================

class ShapeError(EquisparseError):
    exit_code = EXIT_SHAPE

class DimensionMismatch(ShapeError):
    pass

# ===============================
# Numeric failures (exit 4)
# ===============================

class NumericError(EquisparseError):
    exit_code = EXIT_NUMERIC

class PowerIterationDiverged(NumericError):
    pass

class ZeroSignal(NumericError):
    pass

class Separation(NumericError):
    pass

class RankDeficient(NumericError):
    pass
