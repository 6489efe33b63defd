import argparse
import logging

from src.dto.simulation_dto import ScenarioEnum, SimConfig, TreeVariantEnum
from src.exceptions import InputError
from src.repositories.dataset_repository import write_frame, write_matrix, write_partition, write_vector
from src.repositories.tree_repository import write_tree
from src.services.benchmark_service import METHODS, BenchmarkService
from src.services.simulation_service import EXP2_META_STRUCTURE, simulate_replicate
from src.controllers.run_context import RunContext, parse_list

logger = logging.getLogger(__name__)

def _add_scenario_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--scenario", choices=[e.value for e in ScenarioEnum], required=True)
    parser.add_argument("--n", type=int, help="Training sample size")
    parser.add_argument("--p", type=int, help="Feature count (s1-s3)")
    parser.add_argument("--K", dest="K", type=int, help="True group count (s1-s3)")
    parser.add_argument("--rate", type=float, help="Poisson rate of the design")
    parser.add_argument("--snr", type=float, help="Noise divisor: sigma^2 = ||X beta*||^2 / (snr n)")

def _overrides(args: argparse.Namespace) -> dict:
    return {"n": args.n, "p": args.p, "K": args.K, "poisson_rate": args.rate, "snr_divisor": args.snr}

def register(subparsers, common: argparse.ArgumentParser) -> None:
    simulate = subparsers.add_parser("simulate", parents=[common], help="Generate one replicate")
    _add_scenario_args(simulate)
    simulate.add_argument("--variant", choices=[e.value for e in TreeVariantEnum], default="T0")
    simulate.add_argument("--p-s", dest="p_s", type=int, help="Subtree size (exp2)")
    simulate.add_argument("--rep", type=int, default=0, help="Replicate index")
    simulate.set_defaults(handler=cmd_simulate)

    bench = subparsers.add_parser("bench", parents=[common], help="Replicated simulation benchmark")
    _add_scenario_args(bench)
    bench.add_argument("--reps", type=int, default=50)
    bench.add_argument("--methods", help=f"Comma list from {','.join(METHODS)}")
    bench.add_argument("--p-s", dest="p_s", default="3,10,30", help="Comma list of subtree sizes (exp2)")
    bench.set_defaults(handler=cmd_bench)

def cmd_simulate(args: argparse.Namespace) -> None:
    ctx = RunContext("simulate", args)
    config = SimConfig.for_scenario(
        args.scenario, seed=ctx.seed, tree_variant=args.variant, p_s=args.p_s, **_overrides(args)
    )
    replicate = simulate_replicate(config, args.rep)
    truth = replicate.truth
    names = [f"x{j}" for j in range(config.p)]

    write_tree(ctx.path("tree.tsv"), truth.tree)
    for suffix, data in (("", replicate.train), ("_valid", replicate.valid), ("_test", replicate.test)):
        write_matrix(ctx.path(f"X{suffix}.csv"), data.X, columns=names if args.header else None)
        write_vector(ctx.path(f"y{suffix}.csv"), data.y)
    write_vector(ctx.path("beta_star.csv"), truth.beta_star)
    write_partition(ctx.path("partition.csv"), names, truth.partition_star.labels)

    ctx.details["config"] = config.model_dump(mode="json")
    ctx.details["aggregating_set"] = truth.aggregating_set_star.node_ids(truth.tree)
    if config.scenario == ScenarioEnum.EXP2:
        ctx.details["meta_structure"] = EXP2_META_STRUCTURE
    ctx.finish(seeds={"seed": config.seed, "rep": args.rep})

def cmd_bench(args: argparse.Namespace) -> None:
    ctx = RunContext("bench", args)
    if args.reps < 1:
        raise InputError(f"--reps must be >= 1, got {args.reps}")
    service = BenchmarkService(threads=ctx.threads)
    rows, configs = service.bench(
        ScenarioEnum(args.scenario),
        args.reps,
        ctx.seed,
        methods=parse_list(args.methods),
        p_s_values=parse_list(args.p_s, int),
        overrides=_overrides(args),
    )
    write_frame(ctx.path("bench_reps.csv"), rows)
    write_frame(ctx.path("bench_summary.csv"), service.summarize(rows))
    if args.scenario == ScenarioEnum.EXP2.value and {"tree", "rare"} <= set(rows["method"]):
        write_frame(ctx.path("bench_trend.csv"), service.exp2_trend(rows))
        ctx.details["meta_structure"] = EXP2_META_STRUCTURE

    ctx.details["configs"] = [c.model_dump(mode="json") for c in configs]
    ctx.finish()
