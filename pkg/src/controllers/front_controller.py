import argparse
import logging
import sys
from typing import List, Optional

from config.settings import settings
from src.controllers import estimation_controller, inference_controller, simulation_controller
from src.exceptions import EquisparseError

logger = logging.getLogger(__name__)

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", default=".", help="Output directory")
    common.add_argument("--seed", type=int, help="Master seed (default from settings)")
    common.add_argument("--threads", type=int, help="Worker cap (fallback EQUISPARSE_THREADS)")
    common.add_argument("--header", action="store_true", help="Matrices carry a header row of feature names")
    common.add_argument("--log-level", dest="log_level", help="Override the configured log level")

    parser = argparse.ArgumentParser(prog=settings.app.title, description=settings.app.description)
    parser.add_argument("--version", action="version", version=f"%(prog)s {settings.app.version}")
    subparsers = parser.add_subparsers(dest="command", required=True)

    # Include command groups
    estimation_controller.register(subparsers, common)
    simulation_controller.register(subparsers, common)
    inference_controller.register(subparsers, common)
    return parser

def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)

    # Configure logging; stderr keeps primary outputs untouched
    logging.basicConfig(
        level=(args.log_level or settings.app.log_level).upper(),
        format=settings.app.log_format,
        stream=sys.stderr,
    )
    logger.info(f"Starting {settings.app.title} v{settings.app.version}: {args.command}")

    try:
        args.handler(args)
    except EquisparseError as e:
        logger.error(f"{type(e).__name__}: {e.detail}")
        return e.exit_code
    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return 1
    return 0
