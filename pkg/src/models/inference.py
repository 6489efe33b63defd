from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from src.models.results import Partition

@dataclass(frozen=True, eq=False)
class FissionResult:
    y1: np.ndarray = field(repr=False)
    y2: np.ndarray = field(repr=False)
    delta: float = 0.9
    offsets: np.ndarray = field(default=None, repr=False)
    seed: int = 0

    def __repr__(self):
        return f"<FissionResult(n={len(self.y2)}, delta={self.delta})>"

@dataclass(eq=False)
class GlmFit:
    # entries of dropped (aliased) columns are NaN
    coef: np.ndarray = field(repr=False)
    cov: np.ndarray = field(repr=False)
    fitted_log_odds: np.ndarray = field(repr=False)
    converged: bool = True
    iterations: int = 0
    score_norm: float = 0.0
    dropped: List[int] = field(default_factory=list)

    @property
    def q(self) -> int:
        return len(self.coef)

    def __repr__(self):
        return f"<GlmFit(q={self.q}, converged={self.converged}, dropped={self.dropped})>"

@dataclass(frozen=True)
class ContrastResult:
    name: str
    estimate: float
    se: float
    z: float
    p: float
    degenerate: bool = False

@dataclass(eq=False)
class InferenceReport:
    partition: Partition = field(repr=False)
    group_names: List[str] = field(default_factory=list)
    fit: Optional[GlmFit] = field(default=None, repr=False)
    contrasts: List[ContrastResult] = field(default_factory=list)
    p_bh: List[float] = field(default_factory=list)
    selected_lambda: float = 0.0
    delta: float = 0.9

    def __repr__(self):
        return f"<InferenceReport(groups={len(self.group_names)}, contrasts={len(self.contrasts)})>"
