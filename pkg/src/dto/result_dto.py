import math
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from src.models.inference import InferenceReport
from src.models.results import FitResult, SolutionPath, TuneReport
from src.models.tree import Tree

class MethodEnum(str, Enum):
    TREE = "tree"
    RARE = "rare"
    LASSO = "lasso"
    RIDGE = "ridge"
    ORACLE = "oracle"

class LossKindEnum(str, Enum):
    SQUARED = "squared"
    LOGISTIC = "logistic"

def _floats(values) -> List[Optional[float]]:
    return [None if not math.isfinite(v) else float(v) for v in np.asarray(values, dtype=float).ravel()]

# ===============================
# Estimation DTOs
# ===============================

class FitResultDTO(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    method: str
    loss_kind: LossKindEnum
    lambda_: float = Field(..., alias="lambda")
    converged: bool
    iterations: int
    objective: Optional[float] = None
    n_groups: Optional[int] = None
    aggregating_set: Optional[List[str]] = None
    beta: List[Optional[float]]
    gamma: Optional[List[Optional[float]]] = None
    objective_trace: List[Optional[float]] = Field(default_factory=list)

    @classmethod
    def from_domain(cls, fit: FitResult, tree: Optional[Tree] = None) -> "FitResultDTO":
        partition = fit.partition
        source = partition.source_nodes if partition is not None else None
        objective = fit.objective
        return cls(
            method=fit.method,
            loss_kind=LossKindEnum(fit.loss_kind.value),
            lambda_=fit.lambda_,
            converged=fit.converged,
            iterations=fit.iterations,
            objective=objective if math.isfinite(objective) else None,
            n_groups=partition.n_groups if partition is not None else None,
            aggregating_set=source.node_ids(tree) if source is not None and tree is not None else None,
            beta=_floats(fit.beta),
            gamma=_floats(fit.gamma) if fit.gamma is not None else None,
            objective_trace=_floats(fit.objective_trace),
        )

class SolutionPathDTO(BaseModel):
    method: str
    lambdas: List[float]
    n_groups: List[int]
    objective: List[Optional[float]]
    converged: List[bool]

    @classmethod
    def from_domain(cls, path: SolutionPath, n_groups: List[int]) -> "SolutionPathDTO":
        return cls(
            method=path.method,
            lambdas=[float(v) for v in path.lambdas],
            n_groups=n_groups,
            objective=_floats([f.objective for f in path.fits]),
            converged=[f.converged for f in path.fits],
        )

class TuneReportDTO(BaseModel):
    method: str = "tree"
    best_lambda: float
    best_index: int
    lambdas: List[float]
    criterion: List[Optional[float]]
    folds: Optional[List[int]] = None

    @classmethod
    def from_domain(cls, report: TuneReport, method: str = "tree") -> "TuneReportDTO":
        return cls(
            method=method,
            best_lambda=report.best_lambda,
            best_index=report.best_index,
            lambdas=[float(v) for v in report.lambdas],
            criterion=_floats(report.criterion),
            folds=[int(f) for f in report.folds] if report.folds is not None else None,
        )

# ===============================
# Inference DTOs
# ===============================

class ContrastDTO(BaseModel):
    name: str
    estimate: Optional[float]
    se: Optional[float]
    z: Optional[float]
    p: Optional[float]
    p_bh: Optional[float]
    degenerate: bool = False

class InferenceReportDTO(BaseModel):
    delta: float
    selected_lambda: float
    converged: bool
    group_names: List[str]
    selected_partition: List[List[str]]
    coefficients: List[Optional[float]]
    se: List[Optional[float]]
    dropped: List[int] = Field(default_factory=list)
    contrasts: List[ContrastDTO] = Field(default_factory=list)

    @classmethod
    def from_domain(cls, report: InferenceReport, feature_names: List[str]) -> "InferenceReportDTO":
        fit = report.fit
        se = np.sqrt(np.clip(np.diag(fit.cov), 0.0, None)) if fit.cov.size else np.zeros(0)
        return cls(
            delta=report.delta,
            selected_lambda=report.selected_lambda,
            converged=fit.converged,
            group_names=report.group_names,
            selected_partition=[
                [feature_names[j] for j in members] for members in report.partition.groups()
            ],
            coefficients=_floats(fit.coef),
            se=_floats(np.where(np.isnan(fit.coef), np.nan, se)),
            dropped=list(fit.dropped),
            contrasts=[
                ContrastDTO(
                    name=c.name,
                    estimate=_floats([c.estimate])[0],
                    se=_floats([c.se])[0],
                    z=_floats([c.z])[0],
                    p=_floats([c.p])[0],
                    p_bh=_floats([p_bh])[0],
                    degenerate=c.degenerate,
                )
                for c, p_bh in zip(report.contrasts, report.p_bh)
            ],
        )

class CalibrationReportDTO(BaseModel):
    reps: int
    n: int
    p: int
    K: int
    delta: float
    alpha: float
    n_contrasts: int
    wald_size: float
    bh_fdp: float
    failed_reps: int = 0
    focal: bool = False

# ===============================
# Run manifest
# ===============================

class RunManifestDTO(BaseModel):
    command: str
    version: str
    seeds: Dict[str, int] = Field(default_factory=dict)
    config: Dict[str, Any] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict, description="sha256 of every input file")
    details: Dict[str, Any] = Field(default_factory=dict)
    wall_clock: float = 0.0
