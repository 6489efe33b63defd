import logging
import math
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from config import PathConfig, SolverConfig, settings
from src.dto.simulation_dto import ResponseKindEnum, ScenarioEnum, SimConfig, TreeVariantEnum
from src.exceptions import EquisparseError, InputError
from src.models.dataset import Dataset, LossKind
from src.models.results import FitResult, Partition
from src.models.simulation import Replicate
from src.models.tree import Tree
from src.services.baseline_service import (
    group_map, lasso_lambdas, lasso_path, oracle_aggregated_ls, oracle_ridge_path,
    rare_lambdas, rare_path, ridge_lambdas, ridge_path
)
from src.services.penalty_service import make_spec
from src.services.selection_service import (
    adjusted_rand_index, argmin_larger_lambda, cv_with_fitter, extract_partition, kfold_cv,
    partition_from_values, prediction_loss, roc_auc, tree_path_fitter, tune_with_fitter
)
from src.services.simulation_service import make_rng, simulate_replicate

logger = logging.getLogger(__name__)

METHODS = ("tree", "rare", "lasso", "ridge", "oracle-ls", "oracle-ridge")
EVALUATE_METHODS = ("tree", "rare", "lasso", "ridge")
DEFAULT_METHODS = {
    ScenarioEnum.EXP1: ("tree", "rare", "oracle-ls", "oracle-ridge"),
    ScenarioEnum.EXP2: ("tree", "rare"),
    ScenarioEnum.S1: ("tree", "rare"),
    ScenarioEnum.S2: ("tree", "rare"),
    ScenarioEnum.S3: ("tree", "rare"),
}
ORACLE_METHODS = ("oracle-ls", "oracle-ridge")

class BenchmarkService:
    def __init__(
            self,
            grid: Optional[PathConfig] = None,
            solver: Optional[SolverConfig] = None,
            threads: Optional[int] = None
    ):
        self.grid = grid or settings.path
        self.solver = solver or settings.solver
        self.threads = threads or settings.runtime.threads

    # ===============================
    # Method runners
    # ===============================

    def _fitter(self, method: str, tree: Tree, loss_kind: LossKind):
        if method == "tree":
            return tree_path_fitter(make_spec(tree), loss_kind, self.grid, self.solver)
        if method == "rare":
            return lambda train, lams: rare_path(train, tree, loss_kind, self.grid, self.solver, lams)
        if method == "lasso":
            return lambda train, lams: lasso_path(train, loss_kind, self.grid, self.solver, lams)
        if method == "ridge":
            return lambda train, lams: ridge_path(train, loss_kind, self.grid, lams)
        raise InputError(f"Unknown method '{method}'")

    def _partition(self, method: str, fit: FitResult, tree: Tree) -> Partition:
        if method == "tree":
            return extract_partition(fit.beta, tree)
        return partition_from_values(fit.beta)

    def tune_on_validation(
            self, method: str, train: Dataset, valid: Dataset, tree: Tree, loss_kind: LossKind
    ) -> Tuple[FitResult, float]:
        report = tune_with_fitter(self._fitter(method, tree, loss_kind), train, valid, loss_kind)
        return report.best_fit, report.best_lambda

    def tune_by_cv(
            self, method: str, data: Dataset, tree: Tree, loss_kind: LossKind, folds: int, seed: int
    ) -> Tuple[FitResult, float]:
        if method == "tree":
            report = kfold_cv(data, make_spec(tree), folds, self.grid, loss_kind, seed, self.solver, threads=1)
            return report.best_fit, report.best_lambda
        lambdas = {
            "rare": lambda: rare_lambdas(data, tree, loss_kind, self.grid),
            "lasso": lambda: lasso_lambdas(data, loss_kind, self.grid),
            "ridge": lambda: ridge_lambdas(data.X, loss_kind, self.grid),
        }
        if method not in lambdas:
            raise InputError(f"Unknown method '{method}'")
        report = cv_with_fitter(
            self._fitter(method, tree, loss_kind), data, lambdas[method](), folds, loss_kind, seed, threads=1
        )
        return report.best_fit, report.best_lambda

    def run_method(self, method: str, replicate: Replicate, loss_kind: LossKind) -> Dict:
        truth = replicate.truth
        if method in ORACLE_METHODS:
            H = group_map(truth.partition_star)
            if method == "oracle-ls":
                fit, lam = oracle_aggregated_ls(replicate.train, H), 0.0
            else:
                path = oracle_ridge_path(replicate.train, H)
                criterion = np.array([
                    prediction_loss(loss_kind, replicate.valid.X, replicate.valid.y, b) for b in path.betas
                ])
                best = argmin_larger_lambda(path.lambdas, criterion)
                fit, lam = path.fits[best], float(path.lambdas[best])
            partition = truth.partition_star
        else:
            fit, lam = self.tune_on_validation(method, replicate.train, replicate.valid, truth.tree, loss_kind)
            partition = self._partition(method, fit, truth.tree)
        return {
            "method": method,
            "rep": replicate.rep,
            "test_error": prediction_loss(loss_kind, replicate.test.X, replicate.test.y, fit.beta),
            "ari": adjusted_rand_index(partition, truth.partition_star),
            "selected_lambda": lam,
            "n_groups": partition.n_groups,
        }

    # ===============================
    # Simulation benchmarks
    # ===============================

    def run_replicate(self, config: SimConfig, rep: int, methods: Sequence[str]) -> List[Dict]:
        replicate = simulate_replicate(config, rep)
        loss_kind = LossKind.LOGISTIC if config.response == ResponseKindEnum.BERNOULLI else LossKind.SQUARED
        rows = []
        for method in methods:
            if method in ORACLE_METHODS and loss_kind == LossKind.LOGISTIC:
                continue
            try:
                rows.append(self.run_method(method, replicate, loss_kind))
            except EquisparseError as e:
                logger.warning(f"{method} failed on replicate {rep}: {e.detail}")
                rows.append({"method": method, "rep": rep, "test_error": math.nan, "ari": math.nan,
                             "selected_lambda": math.nan, "n_groups": 0})
        logger.debug(f"Finished replicate {rep}")
        return rows

    def run(self, config: SimConfig, reps: int, methods: Sequence[str], setting: str) -> pd.DataFrame:
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise InputError(f"Unknown methods {unknown}; choose from {list(METHODS)}")
        if any(m in ORACLE_METHODS for m in methods) and config.response == ResponseKindEnum.BERNOULLI:
            logger.warning("Oracle least squares baselines are skipped for binary responses")
        per_rep = Parallel(n_jobs=self.threads, prefer="threads")(
            delayed(self.run_replicate)(config, rep, methods) for rep in range(reps)
        )
        frame = pd.DataFrame([row for rows in per_rep for row in rows])
        frame.insert(0, "setting", setting)
        return frame[["setting", "method", "rep", "test_error", "ari", "selected_lambda", "n_groups"]]

    def bench(
            self,
            scenario: ScenarioEnum,
            reps: int,
            seed: int,
            methods: Optional[Sequence[str]] = None,
            p_s_values: Sequence[int] = (3,),
            overrides: Optional[Dict] = None
    ) -> Tuple[pd.DataFrame, List[SimConfig]]:
        """Per-rep rows for every setting of a scenario (tree variants for exp1, p_s for exp2)"""
        scenario = ScenarioEnum(scenario)
        methods = list(methods or DEFAULT_METHODS[scenario])
        overrides = dict(overrides or {})
        if scenario == ScenarioEnum.EXP1:
            configs = [(v.value, SimConfig.for_scenario(scenario, seed=seed, tree_variant=v, **overrides))
                       for v in TreeVariantEnum]
        elif scenario == ScenarioEnum.EXP2:
            configs = [(f"p={20 * p_s}", SimConfig.for_scenario(scenario, seed=seed, p_s=p_s, **overrides))
                       for p_s in p_s_values]
        else:
            config = SimConfig.for_scenario(scenario, seed=seed, **overrides)
            configs = [(f"p={config.p},K={config.K}", config)]

        frames = []
        for setting, config in configs:
            logger.info(f"Benchmark {scenario.value} {setting}: {reps} replicates, methods {methods}")
            frames.append(self.run(config, reps, methods, setting))
        return pd.concat(frames, ignore_index=True), [c for _, c in configs]

    @staticmethod
    def summarize(rows: pd.DataFrame) -> pd.DataFrame:
        """Median and quartiles of test error and ARI per setting and method"""
        grouped = rows.groupby(["setting", "method"], sort=False)
        summary = grouped.agg(
            reps=("rep", "count"),
            test_error_median=("test_error", "median"),
            test_error_q1=("test_error", lambda s: s.quantile(0.25)),
            test_error_q3=("test_error", lambda s: s.quantile(0.75)),
            ari_median=("ari", "median"),
            ari_q1=("ari", lambda s: s.quantile(0.25)),
            ari_q3=("ari", lambda s: s.quantile(0.75)),
        )
        return summary.reset_index()

    @staticmethod
    def exp2_trend(rows: pd.DataFrame) -> pd.DataFrame:
        """Mean tree/RARE error ratio per p, with a least-squares line against 1/sqrt(log p)"""
        wide = rows.pivot_table(index=["setting", "rep"], columns="method", values="test_error")
        if "tree" not in wide or "rare" not in wide:
            raise InputError("The trend needs both tree and rare results")
        ratio = (wide["tree"] / wide["rare"]).groupby(level="setting", sort=False).mean()
        trend = pd.DataFrame({
            "p": [int(s.split("=")[1]) for s in ratio.index],
            "ratio": ratio.to_numpy(),
        }).sort_values("p", ignore_index=True)
        trend["x"] = 1.0 / np.sqrt(np.log(trend["p"]))
        if len(trend) >= 2:
            slope, intercept = np.polyfit(trend["x"], trend["ratio"], 1)
        else:
            slope, intercept = math.nan, math.nan
        trend["fitted"] = intercept + slope * trend["x"]
        trend["slope"] = slope
        trend["intercept"] = intercept
        return trend

    # ===============================
    # Repeated holdout on user data
    # ===============================

    def _evaluate_split(
            self, data: Dataset, tree: Tree, loss_kind: LossKind, methods: Sequence[str],
            split: int, test_fraction: float, folds: int, seed: int
    ) -> List[Dict]:
        order = make_rng(seed, "split", split).permutation(data.n)
        n_test = max(1, int(math.ceil(test_fraction * data.n)))
        test, train = data.subset(order[:n_test]), data.subset(order[n_test:])
        rows = []
        for method in methods:
            try:
                fit, lam = self.tune_by_cv(method, train, tree, loss_kind, folds, seed + split)
            except EquisparseError as e:
                logger.warning(f"{method} failed on split {split}: {e.detail}")
                continue
            partition = self._partition(method, fit, tree)
            rows.append({
                "split": split,
                "method": method,
                "test_loss": prediction_loss(loss_kind, test.X, test.y, fit.beta),
                "auc": roc_auc(test.X, test.y, fit.beta) if loss_kind == LossKind.LOGISTIC else math.nan,
                "selected_lambda": lam,
                "n_groups": partition.n_groups,
            })
        return rows

    def evaluate(
            self,
            data: Dataset,
            tree: Tree,
            loss_kind: LossKind,
            splits: int,
            seed: int,
            methods: Sequence[str] = EVALUATE_METHODS,
            test_fraction: float = 0.25,
            folds: Optional[int] = None
    ) -> pd.DataFrame:
        """Random test holdouts, K-fold CV tuning on the rest, per-split test loss and AUC"""
        folds = folds or settings.selection.folds
        if loss_kind == LossKind.LOGISTIC:
            data.require_binary()
        per_split = Parallel(n_jobs=self.threads, prefer="threads")(
            delayed(self._evaluate_split)(data, tree, loss_kind, methods, s, test_fraction, folds, seed)
            for s in range(splits)
        )
        return pd.DataFrame(
            [row for rows in per_split for row in rows],
            columns=["split", "method", "test_loss", "auc", "selected_lambda", "n_groups"],
        )

    @staticmethod
    def summarize_evaluation(rows: pd.DataFrame) -> pd.DataFrame:
        summary = rows.groupby("method", sort=False).agg(
            splits=("split", "count"),
            test_loss_mean=("test_loss", "mean"),
            test_loss_sd=("test_loss", "std"),
            auc_mean=("auc", "mean"),
        )
        return summary.reset_index()
