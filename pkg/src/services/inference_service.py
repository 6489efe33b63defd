"""
Post-selection inference for binary outcomes by data fission.

y is split into y1 = y XOR Z (Z ~ Bernoulli(delta)), used for selecting a feature
partition, and y2 = y, which is modeled given y1 by a logistic GLM on the aggregated
design with the known offset log((1 - delta) / delta) (y1 = 1) or its negative (y1 = 0).
"""
import logging
import warnings
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import statsmodels.api as sm
from joblib import Parallel, delayed
from scipy.special import expit
from scipy.stats import norm
from statsmodels.stats.multitest import multipletests
from statsmodels.tools.sm_exceptions import PerfectSeparationError

from config import InferenceConfig, PathConfig, settings
from src.dto.result_dto import CalibrationReportDTO
from src.dto.simulation_dto import ResponseKindEnum
from src.exceptions import (
    DeltaOutOfRange, DimensionMismatch, EquisparseError, InputError, NonBinaryResponse,
    OutOfRange, RankDeficient, Separation
)
from src.models.dataset import Dataset, LossKind
from src.models.inference import ContrastResult, FissionResult, GlmFit, InferenceReport
from src.models.results import Partition
from src.models.tree import Tree
from src.services.baseline_service import group_map, rare_lambdas, rare_path
from src.services.penalty_service import make_spec
from src.services.selection_service import (
    cv_with_fitter, extract_partition, kfold_cv, partition_from_values
)
from src.services.simulation_service import gen_design, gen_response, gen_tree_blocks, gen_tree_hclust, make_rng

logger = logging.getLogger(__name__)

# ===============================
# Fission and aggregation
# ===============================

def fission(y: np.ndarray, delta: float, seed: int) -> FissionResult:
    if not 0.5 < delta < 1.0:
        raise DeltaOutOfRange(f"delta must lie in (0.5, 1), got {delta}")
    y = np.asarray(y, dtype=float)
    if not np.all((y == 0) | (y == 1)):
        raise NonBinaryResponse("Data fission needs y in {0, 1}")
    z = make_rng(seed, "fission").random(y.shape[0]) < delta
    y1 = np.where(z, 1.0 - y, y)
    shift = np.log((1.0 - delta) / delta)
    offsets = np.where(y1 == 1.0, shift, -shift)
    return FissionResult(y1=y1, y2=y.copy(), delta=float(delta), offsets=offsets, seed=seed)

def aggregate_design(X: np.ndarray, partition: Partition) -> np.ndarray:
    """Column g is the row sum of X over the features of group g"""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    if X.shape[1] != partition.p:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, partition covers {partition.p}")
    return X @ group_map(partition).H

# ===============================
# Offset logistic GLM
# ===============================

def _independent_columns(X: np.ndarray) -> Tuple[List[int], List[int]]:
    """(kept, dropped) column indices from a pivoted QR"""
    if X.shape[1] == 0:
        return [], []
    R, pivots = scipy.linalg.qr(X, mode="r", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return [], sorted(int(j) for j in pivots)
    tol = max(X.shape) * np.finfo(float).eps * diag[0]
    rank = int(np.sum(diag > tol))
    return sorted(int(j) for j in pivots[:rank]), sorted(int(j) for j in pivots[rank:])

def glm_logistic_offset(
        Xg: np.ndarray,
        y2: np.ndarray,
        offsets: np.ndarray,
        config: Optional[InferenceConfig] = None
) -> GlmFit:
    """
    Bernoulli maximum likelihood with a fixed per-row offset, by IRLS. Aliased columns
    are dropped (NaN coefficients); cov is the inverse Fisher information.
    """
    config = config or settings.inference
    Xg = np.atleast_2d(np.asarray(Xg, dtype=float))
    y2 = np.asarray(y2, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    n, q = Xg.shape
    if y2.shape != (n,) or offsets.shape != (n,):
        raise DimensionMismatch(f"Design has {n} rows, y has {y2.shape}, offsets {offsets.shape}")
    if not np.all((y2 == 0) | (y2 == 1)):
        raise NonBinaryResponse("Logistic GLM needs y in {0, 1}")

    kept, dropped = _independent_columns(Xg)
    if not kept:
        raise RankDeficient("Aggregated design has no linearly independent column")
    if dropped:
        logger.warning(f"Dropped aliased aggregated columns {dropped}")
    X_kept = Xg[:, kept]

    model = sm.GLM(y2, X_kept, family=sm.families.Binomial(), offset=offsets)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        try:
            results = model.fit(method="IRLS", tol=config.glm_tol, maxiter=config.glm_max_iter)
        except PerfectSeparationError as e:
            raise Separation(f"Perfect separation in the aggregated design: {e}")
    separated = any("separation" in str(w.message).lower() for w in caught)

    coef = np.asarray(results.params, dtype=float)
    converged = bool(getattr(results, "converged", True))
    iterations = int(results.fit_history.get("iteration", 0))
    if separated:
        raise Separation(f"Fitted probabilities reach 0 or 1 (max |coef| = {np.max(np.abs(coef)):.3g})")
    if not converged and np.max(np.abs(coef)) > config.separation_bound:
        raise Separation(
            f"IRLS did not settle: max |coef| = {np.max(np.abs(coef)):.3g} > {config.separation_bound}"
        )

    score_norm, coef, cov = _polish(X_kept, y2, offsets, coef, config)
    if cov is None:
        cov = np.asarray(results.cov_params(), dtype=float)

    full_coef = np.full(q, np.nan)
    full_coef[kept] = coef
    full_cov = np.full((q, q), np.nan)
    full_cov[np.ix_(kept, kept)] = cov
    return GlmFit(
        coef=full_coef,
        cov=full_cov,
        fitted_log_odds=offsets + X_kept @ coef,
        converged=converged,
        iterations=iterations,
        score_norm=score_norm,
        dropped=dropped,
    )

def _polish(X: np.ndarray, y: np.ndarray, offsets: np.ndarray, coef: np.ndarray, config: InferenceConfig):
    """
    Newton steps until the score norm reaches score_tol. Returns (score norm, coef, cov);
    cov is None when IRLS already got there.
    """
    def score_and_info(b):
        mu = expit(offsets + X @ b)
        return X.T @ (y - mu), (X.T * (mu * (1.0 - mu))) @ X

    score, info = score_and_info(coef)
    score_norm = float(np.linalg.norm(score))
    if score_norm <= config.score_tol:
        return score_norm, coef, None
    for _ in range(10):
        try:
            coef = coef + scipy.linalg.solve(info, score, assume_a="pos")
        except (scipy.linalg.LinAlgError, ValueError):
            break
        score, info = score_and_info(coef)
        score_norm = float(np.linalg.norm(score))
        if score_norm <= config.score_tol:
            break
    return score_norm, coef, scipy.linalg.pinvh(info)

# ===============================
# Wald contrasts and multiplicity
# ===============================

def wald_contrasts(fit: GlmFit, contrasts: Sequence[Tuple[str, np.ndarray]]) -> List[ContrastResult]:
    """estimate = c'coef, se = sqrt(c' cov c), two-sided normal p-value"""
    usable = ~np.isnan(fit.coef)
    results = []
    for name, c in contrasts:
        c = np.asarray(c, dtype=float)
        if c.shape != (fit.q,):
            raise DimensionMismatch(f"Contrast '{name}' has length {c.size}, expected {fit.q}")
        if np.any(c[~usable] != 0):
            logger.warning(f"Contrast '{name}' involves a dropped column")
            results.append(ContrastResult(name, np.nan, np.nan, np.nan, np.nan, degenerate=True))
            continue
        cu = c[usable]
        estimate = float(cu @ fit.coef[usable])
        variance = float(cu @ fit.cov[np.ix_(usable, usable)] @ cu)
        if not variance > 0:
            logger.warning(f"Contrast '{name}' has zero variance")
            results.append(ContrastResult(name, estimate, 0.0, np.nan, np.nan, degenerate=True))
            continue
        se = float(np.sqrt(variance))
        z = estimate / se
        results.append(ContrastResult(name, estimate, se, z, float(2.0 * norm.sf(abs(z)))))
    return results

def bh_adjust(pvalues: Sequence[float]) -> np.ndarray:
    """Benjamini-Hochberg step-up adjusted p-values"""
    pvalues = np.asarray(pvalues, dtype=float)
    if pvalues.size == 0:
        return pvalues
    if np.any(np.isnan(pvalues)) or np.any((pvalues < 0) | (pvalues > 1)):
        raise OutOfRange("p-values must lie in [0, 1]")
    return multipletests(pvalues, method="fdr_bh")[1]

def _bh_over_valid(contrasts: List[ContrastResult]) -> List[float]:
    p_bh = np.full(len(contrasts), np.nan)
    valid = [i for i, c in enumerate(contrasts) if not c.degenerate]
    if valid:
        p_bh[valid] = bh_adjust([contrasts[i].p for i in valid])
    return [float(v) for v in p_bh]

# ===============================
# Pipeline
# ===============================

def select_partition(
        data1: Dataset,
        tree: Tree,
        method: str = "tree",
        folds: Optional[int] = None,
        seed: int = 0,
        grid: Optional[PathConfig] = None,
        threads: Optional[int] = None
) -> Tuple[Partition, float]:
    """K-fold CV on the selection half; returns (partition, selected lambda)"""
    folds = folds or settings.selection.folds
    if method == "tree":
        report = kfold_cv(data1, make_spec(tree), folds, grid, LossKind.LOGISTIC, seed, threads=threads)
        return extract_partition(report.best_fit.beta, tree), report.best_lambda
    if method == "rare":
        lambdas = rare_lambdas(data1, tree, LossKind.LOGISTIC, grid)

        def fitter(train, lams):
            return rare_path(train, tree, LossKind.LOGISTIC, grid, lambdas=lams)

        report = cv_with_fitter(fitter, data1, lambdas, folds, LossKind.LOGISTIC, seed, threads)
        return partition_from_values(report.best_fit.beta), report.best_lambda
    raise InputError(f"Unknown selection method '{method}'")

def group_names(partition: Partition, tree: Tree, feature_names: Sequence[str]) -> List[str]:
    """Feature name for singletons, the aggregating node id for tree groups, else g<k>"""
    names = []
    source = partition.source_nodes
    for g, members in enumerate(partition.groups()):
        if len(members) == 1:
            names.append(feature_names[members[0]])
        elif source is not None:
            names.append(tree.node_ids[source.node_indices[g]])
        else:
            names.append(f"g{g}")
    return names

def _contrasts(names: List[str], partition: Partition, feature_names: Sequence[str], focal: Optional[str]):
    G = len(names)
    basis = np.eye(G)
    if focal is None:
        return [(names[g], basis[g]) for g in range(G)]
    if focal in names:
        f = names.index(focal)
    elif focal in feature_names:
        f = int(partition.labels[list(feature_names).index(focal)])
    else:
        raise InputError(f"Focal group '{focal}' matches no group or feature")
    return [(f"{names[f]}-{names[g]}", basis[f] - basis[g]) for g in range(G) if g != f]

def run_fission_inference(
        data: Dataset,
        tree: Tree,
        delta: Optional[float] = None,
        seed: int = 0,
        focal: Optional[str] = None,
        method: str = "tree",
        folds: Optional[int] = None,
        config: Optional[InferenceConfig] = None,
        grid: Optional[PathConfig] = None,
        threads: Optional[int] = None,
        partition: Optional[Partition] = None
) -> InferenceReport:
    """
    fission -> CV selection on y1 -> aggregation -> offset GLM on y -> Wald -> BH.
    A supplied `partition` replaces the selection step; the selected lambda is then NaN.
    """
    config = config or settings.inference
    delta = config.delta if delta is None else delta
    if data.p != tree.p:
        raise DimensionMismatch(f"Design has {data.p} columns but the tree has {tree.p} leaves")
    data.require_binary()

    split = fission(data.y, delta, seed)
    data1 = Dataset(
        X=data.X,
        y=split.y1,
        feature_names=data.feature_names,
        offset=split.offsets if config.offset_in_selection else None,
    )
    if partition is None:
        partition, lam = select_partition(data1, tree, method, folds, seed, grid, threads)
        logger.info(f"Selected {partition.n_groups} groups at lambda={lam:.6g}")
    elif partition.p != data.p:
        raise DimensionMismatch(f"Partition covers {partition.p} features but the design has {data.p}")
    else:
        lam = float("nan")

    fit = glm_logistic_offset(aggregate_design(data.X, partition), split.y2, split.offsets, config)
    names = group_names(partition, tree, data.names())
    contrasts = wald_contrasts(fit, _contrasts(names, partition, data.names(), focal))
    return InferenceReport(
        partition=partition,
        group_names=names,
        fit=fit,
        contrasts=contrasts,
        p_bh=_bh_over_valid(contrasts),
        selected_lambda=lam,
        delta=delta,
    )

# ===============================
# Null calibration
# ===============================

def _null_replicate(
        n: int, p: int, K: int, delta: float, seed: int, rep: int, rate: float, alpha: float, folds: int,
        focal: bool
):
    if focal:
        truth = gen_tree_blocks(p, K)
        tree, partition = truth.tree, truth.partition_star
    else:
        tree, partition = gen_tree_hclust(p, K, seed, rep).tree, None
    X = gen_design(n, p, rate, seed, rep)
    data = Dataset(X=X, y=gen_response(X, np.zeros(p), ResponseKindEnum.BERNOULLI, 1.0, seed, rep))
    # column 0 sits in g0
    focal_name = data.names()[0] if focal else None
    try:
        report = run_fission_inference(
            data, tree, delta, seed=seed + rep, focal=focal_name, folds=folds, threads=1,
            partition=partition
        )
    except EquisparseError as e:
        logger.debug(f"null replicate {rep} failed: {e.detail}")
        return None
    pvals = np.array([c.p for c in report.contrasts if not c.degenerate])
    if pvals.size == 0:
        return None
    rejected_bh = np.nansum(np.array(report.p_bh) <= alpha)
    return int(np.sum(pvals <= alpha)), int(pvals.size), float(rejected_bh > 0)

def null_calibration(
        n: int = 400,
        p: int = 40,
        K: int = 4,
        delta: Optional[float] = None,
        reps: int = 1000,
        seed: int = 0,
        threads: Optional[int] = None,
        rate: float = 1.0,
        alpha: Optional[float] = None,
        folds: Optional[int] = None,
        focal: bool = False
) -> CalibrationReportDTO:
    """
    Empirical size of the Wald tests and BH false discovery proportion when beta* = 0.
    Every rejection is false under the null, so the FDP of a replicate is 1 when BH
    rejects anything.

    By default each replicate selects its groups by CV on an hclust tree and tests every
    group effect. With `focal` the columns are fixed in K contiguous groups and the K - 1
    contrasts of g0 against the others are tested, so BH always sees m = K - 1 contrasts.
    """
    delta = settings.inference.delta if delta is None else delta
    alpha = settings.inference.alpha if alpha is None else alpha
    threads = threads or settings.runtime.threads
    folds = folds or settings.selection.folds

    outcomes = Parallel(n_jobs=threads, prefer="threads")(
        delayed(_null_replicate)(n, p, K, delta, seed, rep, rate, alpha, folds, focal) for rep in range(reps)
    )
    done = [o for o in outcomes if o is not None]
    rejections = sum(o[0] for o in done)
    tests = sum(o[1] for o in done)
    return CalibrationReportDTO(
        reps=reps,
        n=n,
        p=p,
        K=K,
        delta=delta,
        alpha=alpha,
        n_contrasts=tests,
        wald_size=rejections / tests if tests else float("nan"),
        bh_fdp=float(np.mean([o[2] for o in done])) if done else float("nan"),
        failed_reps=reps - len(done),
        focal=focal,
    )
