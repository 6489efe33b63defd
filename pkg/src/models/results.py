from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.models.dataset import LossKind
from src.models.tree import AggregatingSet, Tree

# Partition of the p features
@dataclass(frozen=True, eq=False)
class Partition:
    labels: np.ndarray = field(repr=False)
    n_groups: int = 0
    source_nodes: Optional[AggregatingSet] = field(default=None, repr=False)

    @property
    def p(self) -> int:
        return len(self.labels)

    def groups(self) -> List[np.ndarray]:
        return [np.flatnonzero(self.labels == g) for g in range(self.n_groups)]

    def __repr__(self):
        return f"<Partition(p={self.p}, n_groups={self.n_groups})>"

@dataclass(eq=False)
class FitResult:
    beta: np.ndarray = field(repr=False)
    lambda_: float = 0.0
    loss_kind: LossKind = LossKind.SQUARED
    objective_trace: List[float] = field(default_factory=list, repr=False)
    iterations: int = 0
    converged: bool = True
    partition: Optional[Partition] = field(default=None, repr=False)
    method: str = "tree"
    # latent node coefficients (RARE only)
    gamma: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def objective(self) -> float:
        return self.objective_trace[-1] if self.objective_trace else float("nan")

    def __repr__(self):
        return (f"<FitResult(method={self.method}, lambda={self.lambda_:.6g}, "
                f"iterations={self.iterations}, converged={self.converged})>")

@dataclass(eq=False)
class SolutionPath:
    lambdas: np.ndarray = field(repr=False)
    # row i fitted at lambdas[i], warm-started from row i - 1
    betas: np.ndarray = field(repr=False)
    fits: List[FitResult] = field(default_factory=list, repr=False)
    metrics: Optional[np.ndarray] = field(default=None, repr=False)
    method: str = "tree"

    def __repr__(self):
        return f"<SolutionPath(method={self.method}, n_lambda={len(self.lambdas)})>"

@dataclass(eq=False)
class TuneReport:
    lambdas: np.ndarray = field(repr=False)
    criterion: np.ndarray = field(repr=False)
    best_lambda: float = 0.0
    best_fit: Optional[FitResult] = field(default=None, repr=False)
    folds: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def best_index(self) -> int:
        return int(np.flatnonzero(self.lambdas == self.best_lambda)[0])

    def __repr__(self):
        return f"<TuneReport(best_lambda={self.best_lambda:.6g})>"

# RARE overparameterization beta = A gamma
@dataclass(frozen=True, eq=False)
class ExpansionMatrix:
    A: np.ndarray = field(repr=False)
    tree: Tree = field(repr=False)
    penalized: np.ndarray = field(repr=False)

    @property
    def n_columns(self) -> int:
        return self.A.shape[1]

    def __repr__(self):
        return f"<ExpansionMatrix(p={self.A.shape[0]}, L={self.A.shape[1]})>"

# Feature-to-group map beta = H beta_tilde
@dataclass(frozen=True, eq=False)
class GroupMap:
    H: np.ndarray = field(repr=False)

    @property
    def n_groups(self) -> int:
        return self.H.shape[1]

    def __repr__(self):
        return f"<GroupMap(p={self.H.shape[0]}, K={self.H.shape[1]})>"
