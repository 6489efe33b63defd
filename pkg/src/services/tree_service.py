"""
Tree operations: aggregating sets, the Theta(T) diagnostic, node deletion.
"""
import logging
import math
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from src.exceptions import (
    CannotDeleteLeaf, CannotDeleteRoot, DimensionMismatch, MalformedInput, TooFewInternalNodes
)
from src.models.results import Partition
from src.models.tree import AggregatingSet, NodeRecord, Tree

logger = logging.getLogger(__name__)

MergedFlags = Union[np.ndarray, Mapping[int, bool]]

def _flag(merged: MergedFlags, node: int) -> bool:
    if isinstance(merged, Mapping):
        return bool(merged.get(node, False))
    return bool(merged[node])

def coarsest_aggregating_set(tree: Tree, merged: MergedFlags) -> AggregatingSet:
    """
    A node joins the set iff it is merged (or a leaf) and no ancestor is merged.
    `merged` is indexed by node; values for leaves are ignored.
    """
    chosen = []
    for root in tree.kernel_nodes:
        stack = [int(root)]
        while stack:
            node = stack.pop()
            if tree.is_leaf(node) or _flag(merged, node):
                chosen.append(node)
            else:
                stack.extend(reversed(tree.children[node]))

    labels = np.empty(tree.p, dtype=np.int64)
    for g, node in enumerate(chosen):
        labels[tree.leaf_set(node)] = g
    labels.setflags(write=False)
    return AggregatingSet(node_indices=tuple(chosen), induced_partition=labels)

def is_aggregating_set(tree: Tree, node_indices: Iterable[int]) -> bool:
    """Leaf sets pairwise disjoint and covering all p columns"""
    counts = np.zeros(tree.p, dtype=np.int64)
    for node in node_indices:
        counts[tree.leaf_set(int(node))] += 1
    return bool(np.all(counts == 1))

def partition_of(aggregating_set: AggregatingSet) -> Partition:
    return Partition(
        labels=aggregating_set.induced_partition,
        n_groups=len(aggregating_set.node_indices),
        source_nodes=aggregating_set,
    )

def theta(tree: Tree) -> float:
    n_internal = len(tree.internal_nodes)
    if n_internal < 2:
        raise TooFewInternalNodes(
            f"Theta(T) needs at least 2 internal nodes, tree has {n_internal}"
        )
    a_max = float(tree.a[tree.internal_nodes].max())
    return math.sqrt(a_max) * (1.0 + math.sqrt(a_max / math.log(n_internal)))

def delete_internal_nodes(tree: Tree, victims: Sequence[int]) -> Tree:
    """Remove internal non-root nodes, re-attaching their children to the nearest survivor above"""
    doomed = set()
    for node in victims:
        node = int(node)
        if not 0 <= node < tree.n_nodes:
            raise MalformedInput(f"Node index {node} outside the tree")
        if tree.is_leaf(node):
            raise CannotDeleteLeaf(f"Node '{tree.node_ids[node]}' is a leaf")
        if tree.is_root(node):
            raise CannotDeleteRoot(f"Node '{tree.node_ids[node]}' is a root")
        doomed.add(node)
    if not doomed:
        return tree

    records = []
    for node in range(tree.n_nodes):
        if node in doomed:
            continue
        parent = int(tree.parent[node])
        while parent in doomed:
            parent = int(tree.parent[parent])
        records.append(NodeRecord(
            node_id=tree.node_ids[node],
            parent_id=tree.node_ids[parent] if parent >= 0 else None,
            leaf_col=int(tree.leaf_col[node]) if tree.leaf_col[node] >= 0 else None,
        ))
    logger.debug(f"Deleted {len(doomed)} internal nodes, {len(records)} remain")
    return Tree.from_records(records, tree.p)

def delete_by_id(tree: Tree, node_ids: Iterable[str]) -> Tree:
    return delete_internal_nodes(tree, [tree.index[node_id] for node_id in node_ids])

def node_status(tree: Tree, beta: np.ndarray) -> np.ndarray:
    """
    Centered group norm of beta at every node (zero for leaves). Internal nodes with
    zero variability form I_0, the rest I_1.
    """
    beta = np.asarray(beta, dtype=float)
    if beta.shape != (tree.p,):
        raise DimensionMismatch(f"beta has shape {beta.shape}, expected ({tree.p},)")
    permuted = tree.to_permuted(beta)
    status = np.zeros(tree.n_nodes)
    for node in tree.internal_nodes:
        v = permuted[tree.range_start[node]:tree.range_stop[node]]
        if np.ptp(v) > 0:
            status[node] = np.linalg.norm(v - v.mean())
    return status
