"""
Shared plumbing for command controllers: input loading, config overrides, output
directory and the run manifest.
"""
import argparse
import logging
import time
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from config import PathConfig, SolverConfig, settings
from src.dto.result_dto import RunManifestDTO
from src.models.dataset import Dataset
from src.models.penalty import PenaltySpec
from src.models.tree import Tree
from src.repositories.dataset_repository import load_dataset
from src.repositories.result_repository import ensure_dir, file_digest, write_json
from src.repositories.tree_repository import read_tree, read_weights
from src.services.penalty_service import default_weights, make_spec

logger = logging.getLogger(__name__)

class RunContext:
    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.args = args
        self.started = time.perf_counter()
        self.out = ensure_dir(args.out)
        self.inputs: Dict[str, str] = {}
        self.details: Dict[str, Any] = {}
        logger.info(f"{command}: writing to {self.out}")

    @property
    def seed(self) -> int:
        return settings.runtime.seed if self.args.seed is None else self.args.seed

    @property
    def threads(self) -> int:
        return self.args.threads or settings.runtime.threads

    def path(self, name: str) -> Path:
        return self.out / name

    def track(self, *paths: Optional[str]) -> None:
        for path in paths:
            if path:
                self.inputs[str(path)] = file_digest(path)

    # ===============================
    # Inputs
    # ===============================

    def load_data(self) -> Dataset:
        self.track(self.args.x, self.args.y)
        return load_dataset(self.args.x, self.args.y, self.args.header)

    def load_tree(self, p: int) -> Tree:
        self.track(self.args.tree)
        return read_tree(self.args.tree, p)

    def load_spec(self, tree: Tree) -> PenaltySpec:
        weights_path = getattr(self.args, "weights", None)
        if not weights_path:
            return make_spec(tree)
        self.track(weights_path)
        return make_spec(tree, read_weights(weights_path, tree, default_weights(tree)))

    def load_rare_weights(self, tree: Tree) -> Optional[np.ndarray]:
        """Gamma weights keyed by node id; unlisted nodes weigh 1 and roots stay unpenalized"""
        weights_path = getattr(self.args, "weights", None)
        if not weights_path:
            return None
        self.track(weights_path)
        return read_weights(weights_path, tree, np.ones(tree.n_nodes))

    def load_data_and_tree(self) -> Tuple[Dataset, Tree]:
        data = self.load_data()
        return data, self.load_tree(data.p)

    # ===============================
    # Config overrides
    # ===============================

    def solver_config(self) -> SolverConfig:
        update = {
            "max_iter": getattr(self.args, "max_iter", None),
            "tol": getattr(self.args, "tol", None),
        }
        return settings.solver.model_copy(update={k: v for k, v in update.items() if v is not None})

    def path_config(self) -> PathConfig:
        update = {
            "n_lambda": getattr(self.args, "n_lambda", None),
            "lambda_min_ratio": getattr(self.args, "lambda_min_ratio", None),
            "lambda_max": getattr(self.args, "lambda_max", None),
        }
        return settings.path.model_copy(update={k: v for k, v in update.items() if v is not None})

    # ===============================
    # Manifest
    # ===============================

    def finish(self, seeds: Optional[Dict[str, int]] = None) -> None:
        echo = {k: v for k, v in vars(self.args).items() if k != "handler"}
        manifest = RunManifestDTO(
            command=self.command,
            version=settings.app.version,
            seeds=seeds if seeds is not None else {"seed": self.seed},
            config={"args": echo, "settings": settings.model_dump(mode="json")},
            inputs=self.inputs,
            details=self.details,
            wall_clock=round(time.perf_counter() - self.started, 6),
        )
        write_json(self.path("manifest.json"), manifest)
        logger.info(f"{self.command}: done in {manifest.wall_clock:.3f}s")

def parse_list(text: Optional[str], cast=str) -> Optional[List]:
    if text is None:
        return None
    return [cast(item.strip()) for item in text.split(",") if item.strip()]
