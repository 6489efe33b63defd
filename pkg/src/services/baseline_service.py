"""
Comparison estimators: RARE (beta = A gamma with l1 on non-root gamma), lasso,
ridge, and least squares / ridge on known feature groups.
"""
import logging
from typing import Optional, Tuple

import numpy as np
import scipy.linalg

from config import PathConfig, SolverConfig, settings
from src.exceptions import DimensionMismatch, NegativeLambda, OutOfRange
from src.models.dataset import Dataset, LossKind
from src.models.results import ExpansionMatrix, FitResult, GroupMap, Partition, SolutionPath
from src.models.tree import Tree
from src.services.solver_service import (
    CompositeProblem, accelerated_prox_grad, lambda_grid, lipschitz_bound,
    logistic_newton, loss_and_grad
)

logger = logging.getLogger(__name__)

def soft_threshold(v: np.ndarray, threshold: np.ndarray) -> np.ndarray:
    return np.sign(v) * np.maximum(np.abs(v) - threshold, 0.0)

def _check_lambda(lam: float) -> None:
    if lam < 0:
        raise NegativeLambda(f"lambda must be >= 0, got {lam}")

def _l1_problem(X: np.ndarray, data: Dataset, loss_kind: LossKind, weights: np.ndarray) -> CompositeProblem:
    return CompositeProblem(
        X=X,
        y=data.y,
        loss_kind=loss_kind,
        prox=lambda point, threshold: soft_threshold(point, threshold * weights),
        penalty=lambda point: float(np.dot(weights, np.abs(point))),
        offset=data.offset,
    )

def _warn_unconverged(method: str, lam: float, converged: bool) -> None:
    if not converged:
        logger.warning(f"{method}: FISTA stopped without converging (lambda={lam:.6g})")

# ===============================
# RARE
# ===============================

def expansion_matrix(tree: Tree) -> ExpansionMatrix:
    """A[j, i] = 1 iff node i is leaf j or one of its ancestors"""
    A = np.zeros((tree.p, tree.n_nodes))
    for node in range(tree.n_nodes):
        A[tree.leaf_set(node), node] = 1.0
    A.setflags(write=False)
    penalized = tree.parent >= 0
    return ExpansionMatrix(A=A, tree=tree, penalized=penalized)

def _rare_weights(expansion: ExpansionMatrix, weights_gamma: Optional[np.ndarray]) -> np.ndarray:
    if weights_gamma is None:
        weights = np.ones(expansion.n_columns)
    else:
        weights = np.asarray(weights_gamma, dtype=float)
        if weights.shape != (expansion.n_columns,):
            raise DimensionMismatch(
                f"RARE weights have shape {weights.shape}, expected ({expansion.n_columns},)"
            )
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise OutOfRange("RARE weights must be finite and >= 0")
    return np.where(expansion.penalized, weights, 0.0)

def _rare_fit(
        data: Dataset,
        expansion: ExpansionMatrix,
        problem: CompositeProblem,
        lam: float,
        loss_kind: LossKind,
        config: SolverConfig,
        warm_gamma: Optional[np.ndarray],
        lipschitz: Optional[float]
) -> FitResult:
    x0 = np.zeros(expansion.n_columns) if warm_gamma is None else warm_gamma
    gamma, trace, iterations, converged = accelerated_prox_grad(problem, lam, x0, config, lipschitz)
    _warn_unconverged("rare", lam, converged)
    return FitResult(
        beta=expansion.A @ gamma,
        lambda_=float(lam),
        loss_kind=loss_kind,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        method="rare",
        gamma=gamma,
    )

def rare_fit(
        data: Dataset,
        tree: Tree,
        lam: float,
        loss_kind: LossKind = LossKind.SQUARED,
        weights_gamma: Optional[np.ndarray] = None,
        config: Optional[SolverConfig] = None,
        warm_start: Optional[np.ndarray] = None
) -> FitResult:
    """FISTA on the unstandardized design XA; roots are unpenalized"""
    _check_lambda(lam)
    loss_kind = LossKind(loss_kind)
    if data.p != tree.p:
        raise DimensionMismatch(f"Design has {data.p} columns but the tree has {tree.p} leaves")
    if loss_kind == LossKind.LOGISTIC:
        data.require_binary()
    expansion = expansion_matrix(tree)
    weights = _rare_weights(expansion, weights_gamma)
    problem = _l1_problem(data.X @ expansion.A, data, loss_kind, weights)
    return _rare_fit(data, expansion, problem, lam, loss_kind, config or settings.solver, warm_start, None)

def _unpenalized_start(problem: CompositeProblem, free: np.ndarray, loss_kind: LossKind) -> np.ndarray:
    """Loss minimizer over the unpenalized columns, zero elsewhere"""
    start = np.zeros(problem.X.shape[1])
    if not free.any():
        return start
    X_free = problem.X[:, free]
    if loss_kind == LossKind.SQUARED:
        target = problem.y if problem.offset is None else problem.y - problem.offset
        start[free] = scipy.linalg.lstsq(X_free, target, lapack_driver="gelsy")[0]
    else:
        start[free], _, _ = logistic_newton(X_free, problem.y, ridge=1e-8, offset=problem.offset)
    return start

def _l1_lambda_max(problem: CompositeProblem, start: np.ndarray, weights: np.ndarray, loss_kind: LossKind) -> float:
    _, grad = loss_and_grad(loss_kind, problem.X, problem.y, start, problem.offset)
    active = weights > 0
    if not active.any():
        return 1.0
    return max(float(np.max(np.abs(grad[active]) / weights[active])), 1e-12)

def _l1_grid(
        problem: CompositeProblem,
        weights: np.ndarray,
        loss_kind: LossKind,
        grid: PathConfig
) -> Tuple[np.ndarray, np.ndarray]:
    """(lambda grid, fit of the unpenalized columns)"""
    start = _unpenalized_start(problem, weights == 0, loss_kind)
    lam_max = grid.lambda_max or _l1_lambda_max(problem, start, weights, loss_kind)
    return lambda_grid(lam_max, grid.n_lambda, grid.lambda_min_ratio), start

def _l1_path(
        problem: CompositeProblem,
        weights: np.ndarray,
        loss_kind: LossKind,
        grid: PathConfig,
        config: SolverConfig,
        lambdas: Optional[np.ndarray],
        fit_one
) -> SolutionPath:
    lipschitz = lipschitz_bound(loss_kind, problem.X, config)
    if lambdas is None:
        lambdas, start = _l1_grid(problem, weights, loss_kind, grid)
    else:
        start = _unpenalized_start(problem, weights == 0, loss_kind)
    lambdas = np.asarray(lambdas, dtype=float)
    fits, warm = [], start
    for lam in lambdas:
        fit, warm = fit_one(lam, warm, lipschitz)
        fits.append(fit)
    return SolutionPath(
        lambdas=lambdas,
        betas=np.vstack([f.beta for f in fits]),
        fits=fits,
        method=fits[0].method,
    )

def rare_path(
        data: Dataset,
        tree: Tree,
        loss_kind: LossKind = LossKind.SQUARED,
        grid: Optional[PathConfig] = None,
        config: Optional[SolverConfig] = None,
        lambdas: Optional[np.ndarray] = None,
        weights_gamma: Optional[np.ndarray] = None
) -> SolutionPath:
    grid = grid or settings.path
    config = config or settings.solver
    loss_kind = LossKind(loss_kind)
    if data.p != tree.p:
        raise DimensionMismatch(f"Design has {data.p} columns but the tree has {tree.p} leaves")
    if loss_kind == LossKind.LOGISTIC:
        data.require_binary()
    expansion = expansion_matrix(tree)
    weights = _rare_weights(expansion, weights_gamma)
    problem = _l1_problem(data.X @ expansion.A, data, loss_kind, weights)

    def fit_one(lam, warm, lipschitz):
        fit = _rare_fit(data, expansion, problem, lam, loss_kind, config, warm, lipschitz)
        return fit, fit.gamma

    return _l1_path(problem, weights, loss_kind, grid, config, lambdas, fit_one)

def rare_lambdas(
        data: Dataset,
        tree: Tree,
        loss_kind: LossKind = LossKind.SQUARED,
        grid: Optional[PathConfig] = None,
        weights_gamma: Optional[np.ndarray] = None
) -> np.ndarray:
    """Log grid down from the smallest lambda that zeroes every penalized gamma"""
    expansion = expansion_matrix(tree)
    weights = _rare_weights(expansion, weights_gamma)
    problem = _l1_problem(data.X @ expansion.A, data, LossKind(loss_kind), weights)
    return _l1_grid(problem, weights, LossKind(loss_kind), grid or settings.path)[0]

def lasso_lambdas(data: Dataset, loss_kind: LossKind = LossKind.SQUARED, grid: Optional[PathConfig] = None) -> np.ndarray:
    weights = np.ones(data.p)
    problem = _l1_problem(data.X, data, LossKind(loss_kind), weights)
    return _l1_grid(problem, weights, LossKind(loss_kind), grid or settings.path)[0]

# ===============================
# Lasso
# ===============================

def _lasso_fit(problem, lam, loss_kind, config, warm, lipschitz) -> FitResult:
    x0 = np.zeros(problem.X.shape[1]) if warm is None else warm
    beta, trace, iterations, converged = accelerated_prox_grad(problem, lam, x0, config, lipschitz)
    _warn_unconverged("lasso", lam, converged)
    return FitResult(
        beta=beta,
        lambda_=float(lam),
        loss_kind=loss_kind,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        method="lasso",
    )

def lasso_fit(
        data: Dataset,
        lam: float,
        loss_kind: LossKind = LossKind.SQUARED,
        config: Optional[SolverConfig] = None,
        warm_start: Optional[np.ndarray] = None
) -> FitResult:
    _check_lambda(lam)
    loss_kind = LossKind(loss_kind)
    if loss_kind == LossKind.LOGISTIC:
        data.require_binary()
    problem = _l1_problem(data.X, data, loss_kind, np.ones(data.p))
    return _lasso_fit(problem, lam, loss_kind, config or settings.solver, warm_start, None)

def lasso_path(
        data: Dataset,
        loss_kind: LossKind = LossKind.SQUARED,
        grid: Optional[PathConfig] = None,
        config: Optional[SolverConfig] = None,
        lambdas: Optional[np.ndarray] = None
) -> SolutionPath:
    grid = grid or settings.path
    config = config or settings.solver
    loss_kind = LossKind(loss_kind)
    if loss_kind == LossKind.LOGISTIC:
        data.require_binary()
    weights = np.ones(data.p)
    problem = _l1_problem(data.X, data, loss_kind, weights)

    def fit_one(lam, warm, lipschitz):
        fit = _lasso_fit(problem, lam, loss_kind, config, warm, lipschitz)
        return fit, fit.beta

    return _l1_path(problem, weights, loss_kind, grid, config, lambdas, fit_one)

# ===============================
# Ridge
# ===============================

def _ridge_coef(X: np.ndarray, data: Dataset, lam: float, loss_kind: LossKind) -> np.ndarray:
    """argmin loss + lam/2 ||b||^2 (loss scaled by 1/n)"""
    if loss_kind == LossKind.LOGISTIC:
        coef, _, converged = logistic_newton(X, data.y, ridge=lam, offset=data.offset)
        if not converged:
            logger.warning(f"ridge: Newton iterations hit the cap (lambda={lam:.6g})")
        return coef
    target = data.y if data.offset is None else data.y - data.offset
    if lam == 0.0:
        return scipy.linalg.lstsq(X, target, lapack_driver="gelsy")[0]
    n, q = X.shape
    gram = X.T @ X / n + lam * np.eye(q)
    return scipy.linalg.solve(gram, X.T @ target / n, assume_a="pos")

def ridge_fit(data: Dataset, lam: float, loss_kind: LossKind = LossKind.SQUARED) -> FitResult:
    _check_lambda(lam)
    loss_kind = LossKind(loss_kind)
    if loss_kind == LossKind.LOGISTIC:
        data.require_binary()
    return FitResult(
        beta=_ridge_coef(data.X, data, float(lam), loss_kind),
        lambda_=float(lam),
        loss_kind=loss_kind,
        method="ridge",
    )

def ridge_lambdas(X: np.ndarray, loss_kind: LossKind, grid: Optional[PathConfig] = None) -> np.ndarray:
    """Log grid anchored at 100 times the loss curvature bound down to 1e-6 of it"""
    grid = grid or settings.path
    scale = max(lipschitz_bound(loss_kind, X), 1e-12)
    return lambda_grid(100.0 * scale, grid.n_lambda, 1e-6)

def ridge_path(
        data: Dataset,
        loss_kind: LossKind = LossKind.SQUARED,
        grid: Optional[PathConfig] = None,
        lambdas: Optional[np.ndarray] = None
) -> SolutionPath:
    loss_kind = LossKind(loss_kind)
    if lambdas is None:
        lambdas = ridge_lambdas(data.X, loss_kind, grid)
    fits = [ridge_fit(data, lam, loss_kind) for lam in lambdas]
    return SolutionPath(
        lambdas=np.asarray(lambdas, dtype=float),
        betas=np.vstack([f.beta for f in fits]),
        fits=fits,
        method="ridge",
    )

# ===============================
# Known groups
# ===============================

def group_map(partition: Partition) -> GroupMap:
    H = np.zeros((partition.p, partition.n_groups))
    H[np.arange(partition.p), partition.labels] = 1.0
    H.setflags(write=False)
    return GroupMap(H=H)

def oracle_aggregated_ls(data: Dataset, H: GroupMap, ridge_lambda: Optional[float] = None) -> FitResult:
    """
    Least squares on the aggregated design XH (minimum-norm solution when rank
    deficient); with ridge_lambda > 0, ridge on XH instead. Returns beta = H beta_tilde.
    """
    if H.H.shape[0] != data.p:
        raise DimensionMismatch(f"Group map covers {H.H.shape[0]} features, design has {data.p}")
    lam = 0.0 if ridge_lambda is None else float(ridge_lambda)
    _check_lambda(lam)
    coef = _ridge_coef(data.X @ H.H, data, lam, LossKind.SQUARED)
    return FitResult(
        beta=H.H @ coef,
        lambda_=lam,
        loss_kind=LossKind.SQUARED,
        method="oracle-ridge" if lam > 0 else "oracle-ls",
    )

def oracle_ridge_path(data: Dataset, H: GroupMap, lambdas: Optional[np.ndarray] = None) -> SolutionPath:
    X_agg = data.X @ H.H
    if lambdas is None:
        lambdas = ridge_lambdas(X_agg, LossKind.SQUARED)
    fits = [oracle_aggregated_ls(data, H, lam) for lam in lambdas]
    return SolutionPath(
        lambdas=np.asarray(lambdas, dtype=float),
        betas=np.vstack([f.beta for f in fits]),
        fits=fits,
        method="oracle-ridge",
    )
