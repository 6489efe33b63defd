from dataclasses import dataclass, field

import numpy as np

from src.models.dataset import Dataset
from src.models.results import Partition
from src.models.tree import AggregatingSet, Tree

@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Tree plus a coefficient vector that is constant on each true group"""
    tree: Tree = field(repr=False)
    beta_star: np.ndarray = field(repr=False)
    partition_star: Partition = field(repr=False)
    aggregating_set_star: AggregatingSet = field(repr=False)

    @property
    def K(self) -> int:
        return self.partition_star.n_groups

    def __repr__(self):
        return f"<GroundTruth(p={len(self.beta_star)}, K={self.K})>"

@dataclass(frozen=True, eq=False)
class Replicate:
    truth: GroundTruth = field(repr=False)
    train: Dataset = field(repr=False)
    valid: Dataset = field(repr=False)
    test: Dataset = field(repr=False)
    rep: int = 0
