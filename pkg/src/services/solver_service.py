"""
Accelerated proximal gradient (FISTA) for squared and logistic losses.

Solver-internal vectors live in the tree's permuted coordinates so that every
penalty group is a contiguous slice; conversion happens at the boundary.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Tuple

import numpy as np
import scipy.linalg
from scipy.special import expit

from config import PathConfig, SolverConfig, settings
from src.exceptions import (
    DimensionMismatch, NegativeLambda, NonBinaryResponse, OutOfRange, PowerIterationDiverged
)
from src.models.dataset import Dataset, LossKind
from src.models.penalty import PenaltySpec
from src.models.results import FitResult, SolutionPath
from src.models.tree import Tree
from src.services.penalty_service import omega_permuted, prox_permuted
from src.services.tree_service import theta

logger = logging.getLogger(__name__)

_TINY = np.finfo(float).tiny
_ROUNDING = 64.0 * np.finfo(float).eps

# ===============================
# Losses
# ===============================

def _loss_from_linear(kind: LossKind, eta: np.ndarray, y: np.ndarray) -> float:
    n = y.shape[0]
    if kind == LossKind.SQUARED:
        r = y - eta
        return float(np.dot(r, r)) / (2.0 * n)
    return float(np.mean(np.logaddexp(0.0, eta) - y * eta))

def _grad_from_linear(kind: LossKind, X: np.ndarray, eta: np.ndarray, y: np.ndarray) -> np.ndarray:
    n = y.shape[0]
    if kind == LossKind.SQUARED:
        return -(X.T @ (y - eta)) / n
    return (X.T @ (expit(eta) - y)) / n

def _linear(X: np.ndarray, beta: np.ndarray, offset: Optional[np.ndarray]) -> np.ndarray:
    eta = X @ beta
    return eta if offset is None else eta + offset

def loss_and_grad(
        loss_kind: LossKind,
        X: np.ndarray,
        y: np.ndarray,
        beta: np.ndarray,
        offset: Optional[np.ndarray] = None
) -> Tuple[float, np.ndarray]:
    """
    squared:  g = ||y - X beta||^2 / 2n,  grad = -X^T (y - X beta) / n
    logistic: g = mean(log(1 + exp(x^T beta)) - y x^T beta),  grad = X^T (sigmoid(X beta) - y) / n
    """
    loss_kind = LossKind(loss_kind)
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if X.shape != (y.shape[0], beta.shape[0]):
        raise DimensionMismatch(f"X {X.shape}, y {y.shape}, beta {beta.shape} do not agree")
    if loss_kind == LossKind.LOGISTIC and not np.all((y == 0) | (y == 1)):
        raise NonBinaryResponse("Logistic loss needs y in {0, 1}")
    eta = _linear(X, beta, offset)
    return _loss_from_linear(loss_kind, eta, y), _grad_from_linear(loss_kind, X, eta, y)

def lipschitz_bound(loss_kind: LossKind, X: np.ndarray, config: Optional[SolverConfig] = None) -> float:
    """sigma_max(X)^2 / n (squared) or sigma_max(X)^2 / 4n (logistic), by power iteration"""
    config = config or settings.solver
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    rng = np.random.Generator(np.random.Philox(0))
    v = rng.standard_normal(p)
    v /= np.linalg.norm(v)

    sigma2 = 0.0
    for _ in range(config.power_iter_max):
        w = X.T @ (X @ v)
        estimate = float(np.linalg.norm(w))
        if not np.isfinite(estimate):
            raise PowerIterationDiverged("Power iteration produced non-finite values")
        if estimate == 0.0:
            sigma2 = 0.0
            break
        v = w / estimate
        if abs(estimate - sigma2) <= config.power_iter_tol * estimate:
            sigma2 = estimate
            break
        sigma2 = estimate

    bound = sigma2 / n
    return bound / 4.0 if LossKind(loss_kind) == LossKind.LOGISTIC else bound

# ===============================
# Accelerated proximal gradient core
# ===============================

@dataclass
class CompositeProblem:
    """g(x) + lam * h(x) with g a loss of X x (+ offset) and h proximable"""
    X: np.ndarray
    y: np.ndarray
    loss_kind: LossKind
    # (point, threshold) -> prox of threshold * h at point
    prox: Callable[[np.ndarray, float], np.ndarray]
    penalty: Callable[[np.ndarray], float]
    offset: Optional[np.ndarray] = None

def accelerated_prox_grad(
        problem: CompositeProblem,
        lam: float,
        x0: np.ndarray,
        config: SolverConfig,
        lipschitz: Optional[float] = None
) -> Tuple[np.ndarray, List[float], int, bool]:
    """
    FISTA with step 1/L, Nesterov momentum and function-value restart. A step that
    goes uphill is rejected and the momentum reset; an uphill step without momentum
    halves the step size. Stops once the gradient mapping ||y - x_new|| / step falls
    to tol * max(1, ||x_new||), which bounds the distance of x_new from stationarity.
    """
    X, y, kind, offset = problem.X, problem.y, problem.loss_kind, problem.offset
    if lipschitz is None:
        lipschitz = lipschitz_bound(kind, X, config)
    step = 1.0 / max(lipschitz, np.finfo(float).eps)

    x = np.array(x0, dtype=float, copy=True)
    eta_x = _linear(X, x, offset)
    obj_x = _loss_from_linear(kind, eta_x, y) + lam * problem.penalty(x)
    trace = [obj_x]

    point, eta_point = x, eta_x
    t = 1.0
    fresh = True
    converged = False
    iterations = 0
    for iterations in range(1, config.max_iter + 1):
        grad = _grad_from_linear(kind, X, eta_point, y)
        g_point = _loss_from_linear(kind, eta_point, y)
        while True:
            x_new = problem.prox(point - step * grad, step * lam)
            eta_new = _linear(X, x_new, offset)
            g_new = _loss_from_linear(kind, eta_new, y)
            if not config.backtracking:
                break
            diff = x_new - point
            bound = g_point + float(np.dot(grad, diff)) + float(np.dot(diff, diff)) / (2.0 * step)
            if g_new <= bound + 1e-12 * abs(g_point):
                break
            step *= 0.5

        obj_new = g_new + lam * problem.penalty(x_new)
        mapping = float(np.linalg.norm(x_new - point)) / step
        if config.restart and obj_new > obj_x:
            if fresh:
                # point == x here, so the mapping measures x itself
                if (mapping <= config.tol * max(1.0, float(np.linalg.norm(x)))
                        or obj_new - obj_x <= _ROUNDING * max(abs(obj_x), _TINY)):
                    converged = True
                    break
                step *= 0.5
            point, eta_point = x, eta_x
            t = 1.0
            fresh = True
            logger.debug(f"iter {iterations}: restart (objective {obj_new:.12g} > {obj_x:.12g})")
            continue

        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        momentum = (t - 1.0) / t_new
        point = x_new + momentum * (x_new - x)
        eta_point = eta_new + momentum * (eta_new - eta_x)
        fresh = momentum == 0.0

        x, eta_x, obj_x, t = x_new, eta_new, obj_new, t_new
        trace.append(obj_new)
        if mapping <= config.tol * max(1.0, float(np.linalg.norm(x))):
            converged = True
            break

    return x, trace, iterations, converged

# ===============================
# Tree-penalized fits
# ===============================

def _validate_fit_inputs(data: Dataset, tree: Tree, lam: float, loss_kind: LossKind) -> None:
    if lam < 0:
        raise NegativeLambda(f"lambda must be >= 0, got {lam}")
    if data.p != tree.p:
        raise DimensionMismatch(f"Design has {data.p} columns but the tree has {tree.p} leaves")
    if loss_kind == LossKind.LOGISTIC:
        data.require_binary()

def tree_problem(data: Dataset, spec: PenaltySpec, loss_kind: LossKind) -> CompositeProblem:
    tree = spec.tree
    return CompositeProblem(
        X=data.X[:, tree.leaf_perm],
        y=data.y,
        loss_kind=loss_kind,
        prox=lambda point, threshold: prox_permuted(spec, threshold, point),
        penalty=lambda point: omega_permuted(spec, point),
        offset=data.offset,
    )

def fista_fit(
        data: Dataset,
        spec: PenaltySpec,
        lam: float,
        loss_kind: LossKind = LossKind.SQUARED,
        config: Optional[SolverConfig] = None,
        warm_start: Optional[np.ndarray] = None,
        lipschitz: Optional[float] = None,
        problem: Optional[CompositeProblem] = None
) -> FitResult:
    config = config or settings.solver
    loss_kind = LossKind(loss_kind)
    tree = spec.tree
    _validate_fit_inputs(data, tree, lam, loss_kind)
    if warm_start is not None and np.shape(warm_start) != (tree.p,):
        raise DimensionMismatch(f"warm start has shape {np.shape(warm_start)}, expected ({tree.p},)")

    problem = problem or tree_problem(data, spec, loss_kind)
    x0 = tree.to_permuted(warm_start) if warm_start is not None else np.zeros(tree.p)
    x, trace, iterations, converged = accelerated_prox_grad(problem, float(lam), x0, config, lipschitz)
    if not converged:
        logger.warning(f"FISTA stopped at max_iter={config.max_iter} without converging (lambda={lam:.6g})")
    return FitResult(
        beta=tree.from_permuted(x),
        lambda_=float(lam),
        loss_kind=loss_kind,
        objective_trace=trace,
        iterations=iterations,
        converged=converged,
        method="tree",
    )

def logistic_newton(
        X: np.ndarray,
        y: np.ndarray,
        ridge: float = 0.0,
        offset: Optional[np.ndarray] = None,
        tol: Optional[float] = None,
        max_iter: Optional[int] = None
) -> Tuple[np.ndarray, int, bool]:
    """Damped Newton with step halving for mean cross-entropy + ridge/2 ||b||^2"""
    tol = tol if tol is not None else settings.baseline.ridge_newton_tol
    max_iter = max_iter if max_iter is not None else settings.baseline.ridge_newton_max_iter
    n, q = X.shape
    beta = np.zeros(q)

    def objective(b: np.ndarray) -> float:
        return _loss_from_linear(LossKind.LOGISTIC, _linear(X, b, offset), y) + 0.5 * ridge * float(b @ b)

    current = objective(beta)
    for iteration in range(1, max_iter + 1):
        eta = _linear(X, beta, offset)
        mu = expit(eta)
        grad = X.T @ (mu - y) / n + ridge * beta
        if np.max(np.abs(grad)) <= tol:
            return beta, iteration, True
        hessian = (X.T * (mu * (1.0 - mu))) @ X / n + ridge * np.eye(q)
        try:
            direction = scipy.linalg.solve(hessian, grad, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError):
            direction = scipy.linalg.lstsq(hessian, grad)[0]
        scale = 1.0
        for _ in range(50):
            candidate = beta - scale * direction
            value = objective(candidate)
            if value <= current:
                break
            scale *= 0.5
        beta, current = candidate, value
    return beta, max_iter, False

def root_group_map(tree: Tree) -> np.ndarray:
    """p x R indicator of the root (kernel) groups"""
    H = np.zeros((tree.p, len(tree.kernel_nodes)))
    for k, root in enumerate(tree.kernel_nodes):
        H[tree.leaf_set(int(root)), k] = 1.0
    return H

def kernel_fit(data: Dataset, tree: Tree, loss_kind: LossKind = LossKind.SQUARED) -> np.ndarray:
    """Loss minimizer over vectors constant within each root group"""
    H = root_group_map(tree)
    X_agg = data.X @ H
    if LossKind(loss_kind) == LossKind.SQUARED:
        target = data.y if data.offset is None else data.y - data.offset
        coef = scipy.linalg.lstsq(X_agg, target, lapack_driver="gelsy")[0]
    else:
        # tiny ridge keeps the anchor finite under separation
        coef, _, _ = logistic_newton(X_agg, data.y, ridge=1e-8, offset=data.offset)
    return H @ coef

def _fully_aggregated(tree: Tree, beta_perm: np.ndarray, tol_rel: float) -> bool:
    tol = tol_rel * (1.0 + float(np.linalg.norm(beta_perm)))
    for root in tree.kernel_nodes:
        v = beta_perm[tree.range_start[root]:tree.range_stop[root]]
        if np.linalg.norm(v - v.mean()) > tol:
            return False
    return True

def lambda_max_tree(
        data: Dataset,
        spec: PenaltySpec,
        loss_kind: LossKind = LossKind.SQUARED,
        refine_steps: Optional[int] = None,
        lipschitz: Optional[float] = None
) -> float:
    """
    Smallest lambda at which one prox-gradient step from the kernel fit stays fully
    aggregated: doubling search, then bisection.
    """
    refine_steps = settings.path.refine_steps if refine_steps is None else refine_steps
    tol_rel = settings.selection.tol_rel
    tree = spec.tree
    start = kernel_fit(data, tree, loss_kind)
    _, grad = loss_and_grad(loss_kind, data.X, data.y, start, data.offset)
    if lipschitz is None:
        lipschitz = lipschitz_bound(loss_kind, data.X)
    tau = 1.0 / max(lipschitz, np.finfo(float).eps)
    eta = tree.to_permuted(start - tau * grad)

    def aggregated(lam: float) -> bool:
        return _fully_aggregated(tree, prox_permuted(spec, tau * lam, eta), tol_rel)

    lam = max(float(np.linalg.norm(grad)), 1e-12)
    for _ in range(200):
        if aggregated(lam):
            break
        lam *= 2.0
    else:
        logger.warning("Doubling search never reached full aggregation (zero node weights?)")
        return lam
    while lam > 1e-12 and aggregated(lam / 2.0):
        lam /= 2.0

    low, high = lam / 2.0, lam
    for _ in range(refine_steps):
        mid = 0.5 * (low + high)
        if aggregated(mid):
            high = mid
        else:
            low = mid
    return high

def lambda_grid(lambda_max: float, n_lambda: int, lambda_min_ratio: float) -> np.ndarray:
    return np.geomspace(lambda_max, lambda_max * lambda_min_ratio, n_lambda)

def solution_path(
        data: Dataset,
        spec: PenaltySpec,
        loss_kind: LossKind = LossKind.SQUARED,
        grid: Optional[PathConfig] = None,
        config: Optional[SolverConfig] = None,
        lambdas: Optional[np.ndarray] = None
) -> SolutionPath:
    """Warm-started fits along a decreasing log-spaced grid (or a supplied one)"""
    grid = grid or settings.path
    loss_kind = LossKind(loss_kind)
    _validate_fit_inputs(data, spec.tree, 0.0, loss_kind)
    lipschitz = lipschitz_bound(loss_kind, data.X, config)

    if lambdas is None:
        lam_max = grid.lambda_max or lambda_max_tree(
            data, spec, loss_kind, grid.refine_steps, lipschitz
        )
        lambdas = lambda_grid(lam_max, grid.n_lambda, grid.lambda_min_ratio)
    lambdas = np.asarray(lambdas, dtype=float)

    problem = tree_problem(data, spec, loss_kind)
    warm = kernel_fit(data, spec.tree, loss_kind)
    fits = []
    for lam in lambdas:
        fit = fista_fit(data, spec, lam, loss_kind, config, warm, lipschitz, problem)
        fits.append(fit)
        warm = fit.beta
    logger.info(f"Solution path: {len(lambdas)} lambdas from {lambdas[0]:.6g} to {lambdas[-1]:.6g}")
    return SolutionPath(
        lambdas=lambdas,
        betas=np.vstack([f.beta for f in fits]),
        fits=fits,
        method="tree",
    )

# ===============================
# Theory diagnostics
# ===============================

def design_constant(X: np.ndarray, tree: Tree) -> float:
    """C = max_l sigma_max(X_{.A_l} / sqrt(n)) over internal nodes"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != tree.p:
        raise DimensionMismatch(f"Design has {X.shape[1]} columns but the tree has {tree.p} leaves")
    root_n = math.sqrt(X.shape[0])
    return max(
        (float(np.linalg.norm(X[:, tree.leaf_set(int(node))] / root_n, 2)) for node in tree.internal_nodes),
        default=0.0,
    )

def theory_lambda(tree: Tree, sigma: float, C: float, n: int, p: int) -> float:
    """4 sqrt(2) sigma C / sqrt(n) * Theta(T) * sqrt(log(2p) + log|I|), natural logs"""
    if sigma <= 0 or C <= 0:
        raise OutOfRange(f"sigma and C must be positive, got sigma={sigma}, C={C}")
    if n < 1 or p < 1:
        raise OutOfRange(f"n and p must be positive, got n={n}, p={p}")
    n_internal = len(tree.internal_nodes)
    return (4.0 * math.sqrt(2.0) * sigma * C / math.sqrt(n)
            * theta(tree)
            * math.sqrt(math.log(2 * p) + math.log(n_internal)))
