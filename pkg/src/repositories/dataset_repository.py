"""
CSV access for designs, responses and coefficient vectors.

Vectors: one value per line, no header. Matrices: optional header row with feature
names. Floats are written with %.17g so files round-trip exactly.
"""
import logging
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from src.exceptions import DimensionMismatch, EmptyInput, InputError, MalformedInput
from src.models.dataset import Dataset

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]

def _read_numeric(path: PathLike, header: bool) -> Tuple[np.ndarray, Optional[List[str]]]:
    try:
        frame = pd.read_csv(
            path,
            header=0 if header else None,
            dtype=str,
            keep_default_na=False,
            skip_blank_lines=True,
        )
    except FileNotFoundError:
        raise InputError(f"{path}: file not found")
    except pd.errors.EmptyDataError:
        raise EmptyInput(f"{path}: no data")
    except pd.errors.ParserError as e:
        raise MalformedInput(f"{path}: {e}")
    if frame.empty:
        raise EmptyInput(f"{path}: no data rows")

    raw = np.char.strip(frame.to_numpy(dtype=str))
    try:
        values = raw.astype(float)
    except ValueError:
        # slow path only to locate the offending cell
        values = frame.apply(lambda col: pd.to_numeric(col.str.strip(), errors="coerce")).to_numpy(dtype=float)
    bad = ~np.isfinite(values)
    if bad.any():
        row, col = np.argwhere(bad)[0]
        line = int(row) + 1 + (1 if header else 0)
        raise MalformedInput(
            f"{path}: line {line}, column {int(col) + 1}: "
            f"non-finite or non-numeric value '{raw[row, col]}'"
        )
    names = [str(c).strip() for c in frame.columns] if header else None
    return values, names

def read_matrix(path: PathLike, header: bool = False) -> Tuple[np.ndarray, Optional[List[str]]]:
    return _read_numeric(path, header)

def read_vector(path: PathLike) -> np.ndarray:
    values, _ = _read_numeric(path, header=False)
    if values.shape[1] != 1:
        raise DimensionMismatch(f"{path}: expected a single column, found {values.shape[1]}")
    return values[:, 0]

def load_dataset(x_path: PathLike, y_path: PathLike, header: bool = False) -> Dataset:
    X, names = read_matrix(x_path, header)
    y = read_vector(y_path)
    if X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"{x_path} has {X.shape[0]} rows but {y_path} has {y.shape[0]}")
    logger.info(f"Loaded dataset n={X.shape[0]}, p={X.shape[1]} from {x_path}")
    return Dataset(X=X, y=y, feature_names=names)

def write_vector(path: PathLike, values: np.ndarray) -> None:
    pd.DataFrame(np.asarray(values, dtype=float).reshape(-1, 1)).to_csv(
        path, header=False, index=False, float_format=FLOAT_FORMAT, lineterminator="\n"
    )

def write_matrix(path: PathLike, values: np.ndarray, columns: Optional[Sequence[str]] = None) -> None:
    frame = pd.DataFrame(np.atleast_2d(np.asarray(values, dtype=float)))
    if columns is not None:
        frame.columns = list(columns)
    frame.to_csv(
        path, header=columns is not None, index=False,
        float_format=FLOAT_FORMAT, lineterminator="\n"
    )

def write_partition(path: PathLike, feature_names: Sequence[str], labels: np.ndarray) -> None:
    pd.DataFrame({"feature_name": list(feature_names), "group_id": np.asarray(labels, dtype=int)}).to_csv(
        path, index=False, lineterminator="\n"
    )

def write_frame(path: PathLike, frame: pd.DataFrame) -> None:
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")
