from dataclasses import dataclass, field

import numpy as np

from src.exceptions import DimensionMismatch, OutOfRange
from src.models.tree import Tree

@dataclass(frozen=True, eq=False)
class PenaltySpec:
    """
    Tree penalty Omega_{T,w}: a weight per internal node. The weights array is
    indexed by node; entries of leaves are zero and never read.
    """
    tree: Tree
    weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.tree.n_nodes,):
            raise DimensionMismatch(
                f"Expected {self.tree.n_nodes} node weights, got shape {w.shape}"
            )
        internal = self.tree.internal_nodes
        if not np.all(np.isfinite(w[internal])) or np.any(w[internal] < 0):
            raise OutOfRange("Node weights must be finite and nonnegative")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def weight_of(self, node_id: str) -> float:
        return float(self.weights[self.tree.index[node_id]])

    def __repr__(self):
        return f"<PenaltySpec(tree={self.tree!r})>"
