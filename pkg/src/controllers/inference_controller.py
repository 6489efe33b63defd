import argparse
import logging

from src.dto.result_dto import InferenceReportDTO, LossKindEnum
from src.models.dataset import LossKind
from src.repositories.dataset_repository import write_frame, write_partition
from src.repositories.result_repository import write_json
from src.services.benchmark_service import EVALUATE_METHODS, BenchmarkService
from src.services.inference_service import null_calibration, run_fission_inference
from src.controllers.run_context import RunContext, parse_list

logger = logging.getLogger(__name__)

def register(subparsers, common: argparse.ArgumentParser) -> None:
    infer = subparsers.add_parser("infer", parents=[common], help="Data-fission inference on aggregated effects")
    infer.add_argument("--x", required=True, help="Design matrix CSV (n x p)")
    infer.add_argument("--y", required=True, help="Binary response CSV")
    infer.add_argument("--tree", required=True, help="Tree TSV")
    infer.add_argument("--delta", type=float, help="Fission perturbation probability in (0.5, 1)")
    infer.add_argument("--focal", help="Group or feature whose contrasts against all others are tested")
    infer.add_argument("--method", choices=["tree", "rare"], default="tree")
    infer.add_argument("--folds", type=int)
    infer.set_defaults(handler=cmd_infer)

    calibrate = subparsers.add_parser("calibrate", parents=[common], help="Null calibration of inference")
    calibrate.add_argument("--n", type=int, default=400)
    calibrate.add_argument("--p", type=int, default=40)
    calibrate.add_argument("--K", dest="K", type=int, default=4)
    calibrate.add_argument("--delta", type=float)
    calibrate.add_argument("--reps", type=int, default=1000)
    calibrate.add_argument("--rate", type=float, default=1.0)
    calibrate.add_argument("--folds", type=int)
    calibrate.add_argument(
        "--focal", action="store_true", help="Fix K contiguous groups and test the K - 1 contrasts of g0"
    )
    calibrate.set_defaults(handler=cmd_calibrate)

    evaluate = subparsers.add_parser("evaluate", parents=[common], help="Repeated holdout comparison")
    evaluate.add_argument("--x", required=True, help="Design matrix CSV (n x p)")
    evaluate.add_argument("--y", required=True, help="Response vector CSV")
    evaluate.add_argument("--tree", required=True, help="Tree TSV")
    evaluate.add_argument("--loss", choices=[e.value for e in LossKindEnum], default="squared")
    evaluate.add_argument("--splits", type=int, default=20)
    evaluate.add_argument("--folds", type=int)
    evaluate.add_argument("--test-fraction", dest="test_fraction", type=float, default=0.25)
    evaluate.add_argument("--methods", help=f"Comma list from {','.join(EVALUATE_METHODS)}")
    evaluate.set_defaults(handler=cmd_evaluate)

def cmd_infer(args: argparse.Namespace) -> None:
    ctx = RunContext("infer", args)
    data, tree = ctx.load_data_and_tree()
    report = run_fission_inference(
        data, tree, args.delta, ctx.seed, args.focal, args.method, args.folds, threads=ctx.threads
    )
    write_partition(ctx.path("partition.csv"), data.names(), report.partition.labels)
    write_json(ctx.path("inference.json"), InferenceReportDTO.from_domain(report, data.names()))
    ctx.finish()

def cmd_calibrate(args: argparse.Namespace) -> None:
    ctx = RunContext("calibrate", args)
    report = null_calibration(
        args.n, args.p, args.K, args.delta, args.reps, ctx.seed, ctx.threads, args.rate,
        folds=args.folds, focal=args.focal
    )
    write_json(ctx.path("calibration.json"), report)
    ctx.finish()

def cmd_evaluate(args: argparse.Namespace) -> None:
    ctx = RunContext("evaluate", args)
    data, tree = ctx.load_data_and_tree()
    service = BenchmarkService(threads=ctx.threads)
    rows = service.evaluate(
        data, tree, LossKind(args.loss), args.splits, ctx.seed,
        methods=parse_list(args.methods) or EVALUATE_METHODS,
        test_fraction=args.test_fraction,
        folds=args.folds,
    )
    write_frame(ctx.path("evaluate.csv"), rows)
    write_frame(ctx.path("evaluate_summary.csv"), service.summarize_evaluation(rows))
    ctx.finish()
