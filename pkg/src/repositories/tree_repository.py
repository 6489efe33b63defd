"""
Tree-TSV access: `node_id<TAB>parent_id<TAB>leaf_col`, `-` for absent values,
`#` comment lines.
"""
from pathlib import Path
from typing import List, Optional, Union

import numpy as np
import pandas as pd

from src.exceptions import DimensionMismatch, EmptyInput, EquisparseError, InputError, MalformedInput
from src.models.tree import NodeRecord, Tree

MISSING = "-"

def _records(text: str) -> List[NodeRecord]:
    records = []
    for line_no, line in enumerate(text.split("\n"), start=1):
        line = line.rstrip("\r")
        if not line.strip() or line.startswith("#"):
            continue
        fields = line.split("\t")
        if len(fields) != 3:
            raise MalformedInput(f"line {line_no}: expected 3 tab-separated fields, got {len(fields)}")
        node_id, parent_id, leaf_col = (f.strip() for f in fields)
        if not node_id or node_id == MISSING:
            raise MalformedInput(f"line {line_no}: empty node id")
        col: Optional[int] = None
        if leaf_col != MISSING:
            try:
                col = int(leaf_col)
            except ValueError:
                raise MalformedInput(f"line {line_no}: leaf column '{leaf_col}' is not an integer")
        records.append(NodeRecord(
            node_id=node_id,
            parent_id=None if parent_id == MISSING else parent_id,
            leaf_col=col,
            line=line_no,
        ))

    if not records:
        raise EmptyInput("Tree document has no node lines")
    return records

def parse_tree(text: str, p: int) -> Tree:
    if p < 1:
        raise InputError(f"Expected feature count must be >= 1, got {p}")
    return Tree.from_records(_records(text), p)

def _check_width(records: List[NodeRecord], p: int) -> None:
    """The tree must index exactly the p columns of the data it is paired with"""
    cols = [rec.leaf_col for rec in records if rec.leaf_col is not None]
    if len(cols) != p or (cols and max(cols) >= p):
        widest = max(cols) + 1 if cols else 0
        raise DimensionMismatch(
            f"Tree has {len(cols)} leaves over columns [0, {widest}) but the data has {p} columns"
        )

def format_tree(tree: Tree) -> str:
    lines = ["# node_id\tparent_id\tleaf_col"]
    for rec in tree.to_records():
        lines.append("\t".join([
            rec.node_id,
            rec.parent_id if rec.parent_id is not None else MISSING,
            str(rec.leaf_col) if rec.leaf_col is not None else MISSING,
        ]))
    return "\n".join(lines) + "\n"

def read_tree(path: Union[str, Path], p: int) -> Tree:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise InputError(f"{path}: file not found")
    try:
        if p < 1:
            raise InputError(f"Expected feature count must be >= 1, got {p}")
        records = _records(text)
        _check_width(records, p)
        return Tree.from_records(records, p)
    except EquisparseError as e:
        e.detail = f"{path}: {e.detail}"
        e.args = (e.detail,)
        raise

def write_tree(path: Union[str, Path], tree: Tree) -> None:
    Path(path).write_text(format_tree(tree), encoding="utf-8", newline="\n")

def read_weights(path: Union[str, Path], tree: Tree, defaults: np.ndarray) -> np.ndarray:
    """Per-node weights from `node_id<TAB>weight`; unlisted internal nodes keep `defaults`"""
    try:
        frame = pd.read_csv(path, sep="\t", header=None, comment="#", dtype=str,
                            keep_default_na=False)
    except FileNotFoundError:
        raise InputError(f"{path}: file not found")
    except pd.errors.EmptyDataError:
        raise EmptyInput(f"{path}: no weights")
    if frame.shape[1] != 2:
        raise MalformedInput(f"{path}: expected 2 tab-separated columns, got {frame.shape[1]}")

    weights = np.array(defaults, dtype=float)
    for row, (node_id, raw) in enumerate(frame.itertuples(index=False, name=None), start=1):
        node_id = node_id.strip()
        if node_id not in tree.index:
            raise InputError(f"{path}: row {row}: unknown node '{node_id}'")
        try:
            value = float(raw)
        except ValueError:
            raise MalformedInput(f"{path}: row {row}: weight '{raw}' is not a number")
        if not np.isfinite(value) or value < 0:
            raise MalformedInput(f"{path}: row {row}: weight must be finite and >= 0")
        weights[tree.index[node_id]] = value
    return weights
