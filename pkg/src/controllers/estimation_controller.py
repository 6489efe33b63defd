import argparse
import logging

import numpy as np

from src.dto.result_dto import FitResultDTO, LossKindEnum, MethodEnum, SolutionPathDTO, TuneReportDTO
from src.exceptions import InputError
from src.models.dataset import LossKind
from src.repositories.dataset_repository import read_vector, write_matrix, write_partition, write_vector
from src.repositories.result_repository import write_json, write_text
from src.repositories.tree_repository import read_tree
from src.services.baseline_service import (
    group_map, lasso_fit, oracle_aggregated_ls, rare_fit, rare_path, ridge_fit
)
from src.services.penalty_service import prox
from src.services.selection_service import (
    extract_partition, kfold_cv, partition_from_labels, partition_from_values
)
from src.services.solver_service import fista_fit, solution_path
from src.controllers.run_context import RunContext

logger = logging.getLogger(__name__)

def _add_data_args(parser: argparse.ArgumentParser, tree_required: bool = True) -> None:
    parser.add_argument("--x", required=True, help="Design matrix CSV (n x p)")
    parser.add_argument("--y", required=True, help="Response vector CSV")
    parser.add_argument("--tree", required=tree_required, help="Tree TSV")
    parser.add_argument("--loss", choices=[e.value for e in LossKindEnum], default="squared")

def _add_solver_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--max-iter", dest="max_iter", type=int, help="FISTA iteration cap")
    parser.add_argument("--tol", type=float, help="Stationarity tolerance on the gradient mapping")

def _add_grid_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--n-lambda", dest="n_lambda", type=int)
    parser.add_argument("--lambda-min-ratio", dest="lambda_min_ratio", type=float)
    parser.add_argument("--lambda-max", dest="lambda_max", type=float)

def register(subparsers, common: argparse.ArgumentParser) -> None:
    fit = subparsers.add_parser("fit", parents=[common], help="Fit at one lambda")
    _add_data_args(fit, tree_required=False)
    fit.add_argument("--lambda", dest="lam", type=float, required=True)
    fit.add_argument("--method", choices=[e.value for e in MethodEnum], default="tree")
    fit.add_argument("--weights", help="Per-node weight TSV (node penalty for tree, gamma weight for rare)")
    fit.add_argument("--groups", help="Group id per feature, one per line (oracle)")
    _add_solver_args(fit)
    fit.set_defaults(handler=cmd_fit)

    path = subparsers.add_parser("path", parents=[common], help="Warm-started solution path")
    _add_data_args(path)
    path.add_argument("--method", choices=["tree", "rare"], default="tree")
    path.add_argument("--weights", help="Per-node weight TSV (node penalty for tree, gamma weight for rare)")
    _add_grid_args(path)
    _add_solver_args(path)
    path.set_defaults(handler=cmd_path)

    cv = subparsers.add_parser("cv", parents=[common], help="K-fold cross-validation over the path")
    _add_data_args(cv)
    cv.add_argument("--folds", type=int)
    cv.add_argument("--weights", help="Per-node weight TSV")
    _add_grid_args(cv)
    _add_solver_args(cv)
    cv.set_defaults(handler=cmd_cv)

    px = subparsers.add_parser("prox", parents=[common], help="Evaluate the penalty prox")
    px.add_argument("--eta", required=True, help="Input vector CSV")
    px.add_argument("--tree", required=True, help="Tree TSV")
    px.add_argument("--lambda", dest="lam", type=float, required=True)
    px.add_argument("--weights", help="Per-node weight TSV")
    px.set_defaults(handler=cmd_prox)

# ===============================
# Commands
# ===============================

def _write_fit(ctx: RunContext, fit, tree, names) -> None:
    write_vector(ctx.path("beta.csv"), fit.beta)
    if fit.partition is not None:
        write_partition(ctx.path("partition.csv"), names, fit.partition.labels)
        source = fit.partition.source_nodes
        if source is not None and tree is not None:
            write_text(ctx.path("aggregating_set.txt"), "\n".join(source.node_ids(tree)) + "\n")
    if fit.gamma is not None:
        write_vector(ctx.path("gamma.csv"), fit.gamma)
    write_json(ctx.path("fit.json"), FitResultDTO.from_domain(fit, tree))

def cmd_fit(args: argparse.Namespace) -> None:
    ctx = RunContext("fit", args)
    loss_kind = LossKind(args.loss)
    data = ctx.load_data()
    tree = None
    if args.method in ("tree", "rare"):
        if not args.tree:
            raise InputError(f"--tree is required for --method {args.method}")
        tree = ctx.load_tree(data.p)

    if args.method == "tree":
        fit = fista_fit(data, ctx.load_spec(tree), args.lam, loss_kind, ctx.solver_config())
        fit.partition = extract_partition(fit.beta, tree)
    elif args.method == "rare":
        fit = rare_fit(data, tree, args.lam, loss_kind, ctx.load_rare_weights(tree), ctx.solver_config())
        fit.partition = partition_from_values(fit.beta)
    elif args.method == "lasso":
        fit = lasso_fit(data, args.lam, loss_kind, ctx.solver_config())
        fit.partition = partition_from_values(fit.beta)
    elif args.method == "ridge":
        fit = ridge_fit(data, args.lam, loss_kind)
        fit.partition = partition_from_values(fit.beta)
    else:
        if not args.groups:
            raise InputError("--groups is required for --method oracle")
        if loss_kind != LossKind.SQUARED:
            raise InputError("The oracle estimator supports squared loss only")
        ctx.track(args.groups)
        partition = partition_from_labels(read_vector(args.groups).astype(np.int64))
        fit = oracle_aggregated_ls(data, group_map(partition), args.lam or None)
        fit.partition = partition

    _write_fit(ctx, fit, tree, data.names())
    ctx.finish()

def cmd_path(args: argparse.Namespace) -> None:
    ctx = RunContext("path", args)
    loss_kind = LossKind(args.loss)
    data, tree = ctx.load_data_and_tree()
    if args.method == "tree":
        path = solution_path(data, ctx.load_spec(tree), loss_kind, ctx.path_config(), ctx.solver_config())
        partitions = [extract_partition(beta, tree) for beta in path.betas]
    else:
        path = rare_path(
            data, tree, loss_kind, ctx.path_config(), ctx.solver_config(),
            weights_gamma=ctx.load_rare_weights(tree),
        )
        partitions = [partition_from_values(beta) for beta in path.betas]

    write_matrix(
        ctx.path("path.csv"),
        np.column_stack([path.lambdas, path.betas]),
        columns=["lambda", *data.names()],
    )
    write_json(ctx.path("path.json"), SolutionPathDTO.from_domain(path, [p.n_groups for p in partitions]))
    ctx.finish()

def cmd_cv(args: argparse.Namespace) -> None:
    ctx = RunContext("cv", args)
    loss_kind = LossKind(args.loss)
    data, tree = ctx.load_data_and_tree()
    report = kfold_cv(
        data, ctx.load_spec(tree), args.folds, ctx.path_config(), loss_kind,
        ctx.seed, ctx.solver_config(), ctx.threads,
    )
    fit = report.best_fit
    fit.partition = extract_partition(fit.beta, tree)
    _write_fit(ctx, fit, tree, data.names())
    write_json(ctx.path("cv.json"), TuneReportDTO.from_domain(report))
    ctx.details["folds"] = [int(f) for f in report.folds]
    ctx.finish()

def cmd_prox(args: argparse.Namespace) -> None:
    ctx = RunContext("prox", args)
    ctx.track(args.eta)
    eta = read_vector(args.eta)
    ctx.track(args.tree)
    tree = read_tree(args.tree, len(eta))
    write_vector(ctx.path("prox.csv"), prox(ctx.load_spec(tree), args.lam, eta))
    ctx.finish()
