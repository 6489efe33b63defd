"""
Partition extraction, lambda tuning (validation set, K-fold CV) and evaluation metrics.
"""
import logging
from typing import Callable, Optional, Sequence

import numpy as np
from joblib import Parallel, delayed
from sklearn.metrics import adjusted_rand_score, roc_auc_score

from config import PathConfig, SolverConfig, settings
from src.exceptions import DimensionMismatch, FoldTooSmall, InputError, NonBinaryResponse
from src.models.dataset import Dataset, LossKind
from src.models.penalty import PenaltySpec
from src.models.results import Partition, SolutionPath, TuneReport
from src.models.tree import Tree
from src.services.simulation_service import make_rng
from src.services.solver_service import lambda_grid, lambda_max_tree, lipschitz_bound, solution_path
from src.services.tree_service import coarsest_aggregating_set, partition_of

logger = logging.getLogger(__name__)

# (train, lambdas or None) -> SolutionPath
PathFitter = Callable[[Dataset, Optional[np.ndarray]], SolutionPath]

# ===============================
# Partitions
# ===============================

def extract_partition(beta: np.ndarray, tree: Tree, tol_rel: Optional[float] = None) -> Partition:
    """Merge every internal node whose centered norm is within tol_rel * (1 + ||beta||)"""
    tol_rel = tol_rel if tol_rel is not None else settings.selection.tol_rel
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (tree.p,):
        raise DimensionMismatch(f"beta has shape {beta.shape}, expected ({tree.p},)")
    tol = tol_rel * (1.0 + float(np.linalg.norm(beta)))
    permuted = tree.to_permuted(beta)
    merged = np.zeros(tree.n_nodes, dtype=bool)
    for node in tree.internal_nodes:
        v = permuted[tree.range_start[node]:tree.range_stop[node]]
        merged[node] = np.linalg.norm(v - v.mean()) <= tol
    return partition_of(coarsest_aggregating_set(tree, merged))

def partition_from_labels(labels: Sequence) -> Partition:
    """Canonical partition: groups numbered by first appearance"""
    _, first, inverse = np.unique(np.asarray(labels), return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    canonical = order[inverse.reshape(-1)].astype(np.int64)
    canonical.setflags(write=False)
    return Partition(labels=canonical, n_groups=len(first))

def partition_from_values(beta: np.ndarray, tol_rel: Optional[float] = None) -> Partition:
    """Group coefficients that agree within tol_rel * (1 + ||beta||) after sorting"""
    tol_rel = tol_rel if tol_rel is not None else settings.selection.tol_rel
    beta = np.asarray(beta, dtype=float)
    if beta.size == 0:
        return Partition(labels=np.zeros(0, dtype=np.int64), n_groups=0)
    tol = tol_rel * (1.0 + float(np.linalg.norm(beta)))
    order = np.argsort(beta, kind="stable")
    breaks = np.concatenate(([0], np.cumsum(np.diff(beta[order]) > tol)))
    labels = np.empty(beta.size, dtype=np.int64)
    labels[order] = breaks
    return partition_from_labels(labels)

# ===============================
# Metrics
# ===============================

def adjusted_rand_index(p1: Partition, p2: Partition) -> float:
    if p1.p != p2.p:
        raise DimensionMismatch(f"Partitions cover {p1.p} and {p2.p} features")
    return float(adjusted_rand_score(p1.labels, p2.labels))

def prediction_loss(
        loss_kind: LossKind,
        X: np.ndarray,
        y: np.ndarray,
        beta: np.ndarray,
        offset: Optional[np.ndarray] = None
) -> float:
    """Mean squared error or mean cross-entropy"""
    eta = X @ beta
    if offset is not None:
        eta = eta + offset
    if LossKind(loss_kind) == LossKind.SQUARED:
        return float(np.mean((y - eta) ** 2))
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))

def roc_auc(X: np.ndarray, y: np.ndarray, beta: np.ndarray) -> float:
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryResponse("AUC needs y in {0, 1}")
    if np.unique(y).size < 2:
        return float("nan")
    return float(roc_auc_score(y, X @ beta))

# ===============================
# Tuning
# ===============================

def argmin_larger_lambda(lambdas: np.ndarray, criterion: np.ndarray) -> int:
    """First minimizer after ordering by decreasing lambda"""
    order = np.argsort(-lambdas, kind="stable")
    return int(order[int(np.argmin(criterion[order]))])

def tree_path_fitter(
        spec: PenaltySpec,
        loss_kind: LossKind,
        grid: Optional[PathConfig] = None,
        config: Optional[SolverConfig] = None
) -> PathFitter:
    def fit(train: Dataset, lambdas: Optional[np.ndarray]) -> SolutionPath:
        return solution_path(train, spec, loss_kind, grid, config, lambdas)
    return fit

def tune_with_fitter(
        fitter: PathFitter,
        train: Dataset,
        valid: Dataset,
        loss_kind: LossKind,
        lambdas: Optional[np.ndarray] = None
) -> TuneReport:
    if train.p != valid.p:
        raise DimensionMismatch(f"train has {train.p} columns, valid has {valid.p}")
    path = fitter(train, lambdas)
    criterion = np.array([
        prediction_loss(loss_kind, valid.X, valid.y, beta, valid.offset) for beta in path.betas
    ])
    best = argmin_larger_lambda(path.lambdas, criterion)
    return TuneReport(
        lambdas=path.lambdas,
        criterion=criterion,
        best_lambda=float(path.lambdas[best]),
        best_fit=path.fits[best],
    )

def tune_validation(
        train: Dataset,
        valid: Dataset,
        spec: PenaltySpec,
        grid: Optional[PathConfig] = None,
        loss_kind: LossKind = LossKind.SQUARED,
        config: Optional[SolverConfig] = None
) -> TuneReport:
    """Fit the path on train, score every beta on valid, keep the argmin (ties to larger lambda)"""
    report = tune_with_fitter(tree_path_fitter(spec, loss_kind, grid, config), train, valid, loss_kind)
    logger.info(f"Validation tuning selected lambda={report.best_lambda:.6g}")
    return report

def fold_assignment(n: int, k: int, seed: int) -> np.ndarray:
    """Fold id per row from a seeded shuffle; folds sizes differ by at most one"""
    if k < 2:
        raise InputError(f"Need at least 2 folds, got {k}")
    if k > n:
        raise FoldTooSmall(f"{k} folds for {n} rows leaves an empty fold")
    rng = make_rng(seed, "folds")
    folds = np.empty(n, dtype=np.int64)
    for fold, rows in enumerate(np.array_split(rng.permutation(n), k)):
        folds[rows] = fold
    return folds

def _check_folds(folds: np.ndarray, n: int, k: int) -> np.ndarray:
    folds = np.asarray(folds, dtype=np.int64)
    if folds.shape != (n,):
        raise DimensionMismatch(f"Fold ids have shape {folds.shape}, expected ({n},)")
    if np.any((folds < 0) | (folds >= k)):
        raise InputError(f"Fold ids must lie in [0, {k})")
    if np.bincount(folds, minlength=k).min() == 0:
        raise FoldTooSmall(f"Fold ids leave an empty fold among {k}")
    return folds

def cv_with_fitter(
        fitter: PathFitter,
        data: Dataset,
        lambdas: np.ndarray,
        k: int,
        loss_kind: LossKind,
        seed: int,
        threads: Optional[int] = None,
        folds: Optional[np.ndarray] = None
) -> TuneReport:
    threads = threads or settings.runtime.threads
    folds = fold_assignment(data.n, k, seed) if folds is None else _check_folds(folds, data.n, k)

    def fold_losses(fold: int) -> np.ndarray:
        held_out = folds == fold
        train, valid = data.subset(~held_out), data.subset(held_out)
        path = fitter(train, lambdas)
        return np.array([
            prediction_loss(loss_kind, valid.X, valid.y, beta, valid.offset) for beta in path.betas
        ])

    losses = Parallel(n_jobs=threads, prefer="threads")(delayed(fold_losses)(f) for f in range(k))
    criterion = np.mean(np.vstack(losses), axis=0)
    best = argmin_larger_lambda(lambdas, criterion)

    full = fitter(data, lambdas[: best + 1])
    return TuneReport(
        lambdas=lambdas,
        criterion=criterion,
        best_lambda=float(lambdas[best]),
        best_fit=full.fits[-1],
        folds=folds,
    )

def kfold_cv(
        data: Dataset,
        spec: PenaltySpec,
        k: Optional[int] = None,
        grid: Optional[PathConfig] = None,
        loss_kind: LossKind = LossKind.SQUARED,
        seed: Optional[int] = None,
        config: Optional[SolverConfig] = None,
        threads: Optional[int] = None,
        folds: Optional[np.ndarray] = None
) -> TuneReport:
    """K-fold CV on a lambda grid computed once from the full data; `folds` overrides the seeded split"""
    k = k or settings.selection.folds
    seed = settings.runtime.seed if seed is None else seed
    grid = grid or settings.path
    loss_kind = LossKind(loss_kind)

    if grid.lambda_max is not None:
        lam_max = grid.lambda_max
    else:
        lipschitz = lipschitz_bound(loss_kind, data.X, config)
        lam_max = lambda_max_tree(data, spec, loss_kind, grid.refine_steps, lipschitz)
    lambdas = lambda_grid(lam_max, grid.n_lambda, grid.lambda_min_ratio)

    report = cv_with_fitter(
        tree_path_fitter(spec, loss_kind, grid, config), data, lambdas, k, loss_kind, seed, threads, folds
    )
    logger.info(f"{k}-fold CV selected lambda={report.best_lambda:.6g}")
    return report
