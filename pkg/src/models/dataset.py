import enum
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.exceptions import DimensionMismatch, EmptyInput, MalformedInput, NonBinaryResponse

class LossKind(str, enum.Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"

@dataclass(frozen=True, eq=False)
class Dataset:
    """Dense design X (n x p, row = observation), response y, optional per-row offset"""
    X: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)
    feature_names: Optional[List[str]] = field(default=None, repr=False)
    offset: Optional[np.ndarray] = field(default=None, repr=False)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if X.size == 0 or y.size == 0:
            raise EmptyInput("Dataset needs n >= 1 and p >= 1")
        if X.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if not np.all(np.isfinite(X)) or not np.all(np.isfinite(y)):
            raise MalformedInput("Dataset contains non-finite values")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DimensionMismatch(
                f"{len(self.feature_names)} feature names for {X.shape[1]} columns"
            )
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if self.offset is not None:
            offset = np.asarray(self.offset, dtype=float).reshape(-1)
            if offset.shape != y.shape:
                raise DimensionMismatch(f"offset has {offset.size} entries, expected {y.size}")
            object.__setattr__(self, "offset", offset)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def names(self) -> List[str]:
        return list(self.feature_names) if self.feature_names else [f"x{j}" for j in range(self.p)]

    def require_binary(self) -> None:
        if not np.all((self.y == 0) | (self.y == 1)):
            raise NonBinaryResponse("Logistic loss needs y in {0, 1}")

    def subset(self, rows: np.ndarray) -> "Dataset":
        return Dataset(
            X=self.X[rows],
            y=self.y[rows],
            feature_names=self.feature_names,
            offset=None if self.offset is None else self.offset[rows],
        )

    def with_offset(self, offset: Optional[np.ndarray]) -> "Dataset":
        return Dataset(X=self.X, y=self.y, feature_names=self.feature_names, offset=offset)

    def __repr__(self):
        return f"<Dataset(n={self.n}, p={self.p})>"
