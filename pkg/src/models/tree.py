from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.exceptions import (
    CycleDetected, DanglingParent, DuplicateLeafColumn, EmptyInput,
    MalformedInput, MissingLeafColumn
)

def _frozen(values, dtype=np.int64) -> np.ndarray:
    arr = np.asarray(values, dtype=dtype)
    arr.setflags(write=False)
    return arr

# Node record (one tree-TSV line)
@dataclass(frozen=True)
class NodeRecord:
    node_id: str
    parent_id: Optional[str]
    leaf_col: Optional[int]
    line: int = 0

# Internal nodes of one depth layer, laid out for segment reductions
@dataclass(frozen=True, eq=False)
class LayerPlan:
    depth: int
    nodes: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)
    # permuted positions of all member leaves, node after node
    positions: np.ndarray = field(repr=False)
    # start of each node's segment inside `positions`
    offsets: np.ndarray = field(repr=False)

@dataclass(frozen=True, eq=False)
class Tree:
    """
    Rooted forest whose leaves are the p feature columns.

    Nodes are addressed by dense integer indices (record order); node_ids are the
    opaque identifiers from the input. All leaf sets are contiguous ranges
    [range_start, range_stop) of the permuted coordinates given by leaf_perm.
    """
    node_ids: Tuple[str, ...]
    parent: np.ndarray = field(repr=False)
    children: Tuple[Tuple[int, ...], ...] = field(repr=False)
    leaf_col: np.ndarray = field(repr=False)
    n_leaves: int = 0
    depth: np.ndarray = field(repr=False, default=None)
    layers: Tuple[np.ndarray, ...] = field(repr=False, default=())
    leaf_perm: np.ndarray = field(repr=False, default=None)
    range_start: np.ndarray = field(repr=False, default=None)
    range_stop: np.ndarray = field(repr=False, default=None)
    internal_nodes: np.ndarray = field(repr=False, default=None)
    kernel_nodes: np.ndarray = field(repr=False, default=None)
    plan: Tuple[LayerPlan, ...] = field(repr=False, default=())
    index: Dict[str, int] = field(repr=False, default_factory=dict)

    # ===============================
    # Construction
    # ===============================

    @classmethod
    def from_records(cls, records: Sequence[NodeRecord], p: int) -> "Tree":
        if not records:
            raise EmptyInput("Tree has no nodes")

        index: Dict[str, int] = {}
        for rec in records:
            if rec.node_id in index:
                raise MalformedInput(f"line {rec.line}: duplicate node id '{rec.node_id}'")
            index[rec.node_id] = len(index)

        n_nodes = len(records)
        parent = np.full(n_nodes, -1, dtype=np.int64)
        children: List[List[int]] = [[] for _ in range(n_nodes)]
        for i, rec in enumerate(records):
            if rec.parent_id is None:
                continue
            if rec.parent_id not in index:
                raise DanglingParent(rec.parent_id)
            parent[i] = index[rec.parent_id]
            children[parent[i]].append(i)

        leaf_col = np.full(n_nodes, -1, dtype=np.int64)
        owner: Dict[int, int] = {}
        for i, rec in enumerate(records):
            if children[i]:
                if rec.leaf_col is not None:
                    raise MalformedInput(
                        f"line {rec.line}: internal node '{rec.node_id}' has a leaf column"
                    )
                continue
            if rec.leaf_col is None:
                raise MalformedInput(f"line {rec.line}: leaf '{rec.node_id}' has no leaf column")
            if not 0 <= rec.leaf_col < p:
                raise MalformedInput(
                    f"line {rec.line}: leaf column {rec.leaf_col} outside [0, {p})"
                )
            if rec.leaf_col in owner:
                raise DuplicateLeafColumn(
                    f"line {rec.line}: column {rec.leaf_col} already used by "
                    f"'{records[owner[rec.leaf_col]].node_id}'"
                )
            owner[rec.leaf_col] = i
            leaf_col[i] = rec.leaf_col

        roots = [i for i in range(n_nodes) if parent[i] < 0]
        if not roots:
            raise CycleDetected("Every node has a parent; parent links contain a cycle")

        # Depth-first traversal, children in file order
        depth = np.zeros(n_nodes, dtype=np.int64)
        start = np.zeros(n_nodes, dtype=np.int64)
        stop = np.zeros(n_nodes, dtype=np.int64)
        perm: List[int] = []
        visited = np.zeros(n_nodes, dtype=bool)
        for root in roots:
            stack: List[Tuple[int, int]] = [(root, 0)]
            visited[root] = True
            start[root] = len(perm)
            while stack:
                node, k = stack.pop()
                if k == 0 and not children[node]:
                    perm.append(int(leaf_col[node]))
                if k < len(children[node]):
                    stack.append((node, k + 1))
                    child = children[node][k]
                    if visited[child]:
                        raise CycleDetected(f"Node '{records[child].node_id}' is reached twice")
                    visited[child] = True
                    depth[child] = depth[node] + 1
                    start[child] = len(perm)
                    stack.append((child, 0))
                else:
                    stop[node] = len(perm)
        if not visited.all():
            stranded = records[int(np.flatnonzero(~visited)[0])].node_id
            raise CycleDetected(f"Node '{stranded}' is not reachable from any root")

        for col in range(p):
            if col not in owner:
                raise MissingLeafColumn(col)

        internal = [i for i in range(n_nodes) if children[i]]
        max_depth = int(depth.max())
        layers = tuple(_frozen(np.flatnonzero(depth == d)) for d in range(max_depth + 1))

        plan = []
        for d in range(max_depth, -1, -1):
            members = [i for i in internal if depth[i] == d and stop[i] - start[i] > 1]
            if not members:
                continue
            sizes = np.array([stop[i] - start[i] for i in members], dtype=np.int64)
            positions = np.concatenate([np.arange(start[i], stop[i]) for i in members])
            offsets = np.concatenate(([0], np.cumsum(sizes)[:-1]))
            plan.append(LayerPlan(
                depth=d,
                nodes=_frozen(members),
                sizes=_frozen(sizes),
                positions=_frozen(positions),
                offsets=_frozen(offsets),
            ))

        return cls(
            node_ids=tuple(rec.node_id for rec in records),
            parent=_frozen(parent),
            children=tuple(tuple(c) for c in children),
            leaf_col=_frozen(leaf_col),
            n_leaves=p,
            depth=_frozen(depth),
            layers=layers,
            leaf_perm=_frozen(perm),
            range_start=_frozen(start),
            range_stop=_frozen(stop),
            internal_nodes=_frozen(internal),
            kernel_nodes=_frozen(roots),
            plan=tuple(plan),
            index=index,
        )

    def to_records(self) -> List[NodeRecord]:
        return [
            NodeRecord(
                node_id=self.node_ids[i],
                parent_id=self.node_ids[self.parent[i]] if self.parent[i] >= 0 else None,
                leaf_col=int(self.leaf_col[i]) if self.leaf_col[i] >= 0 else None,
            )
            for i in range(self.n_nodes)
        ]

    # ===============================
    # Queries
    # ===============================

    @property
    def n_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def p(self) -> int:
        return self.n_leaves

    @property
    def a(self) -> np.ndarray:
        """Group size a_l of every node"""
        return self.range_stop - self.range_start

    def is_leaf(self, node: int) -> bool:
        return not self.children[node]

    def is_root(self, node: int) -> bool:
        return self.parent[node] < 0

    def leaf_set(self, node: int) -> np.ndarray:
        """Sorted feature columns under a node"""
        return np.sort(self.leaf_perm[self.range_start[node]:self.range_stop[node]])

    def ancestors(self, node: int) -> List[int]:
        path = []
        node = int(self.parent[node])
        while node >= 0:
            path.append(node)
            node = int(self.parent[node])
        return path

    def to_permuted(self, beta: np.ndarray) -> np.ndarray:
        return np.asarray(beta, dtype=float)[self.leaf_perm]

    def from_permuted(self, beta_perm: np.ndarray) -> np.ndarray:
        out = np.empty_like(beta_perm)
        out[self.leaf_perm] = beta_perm
        return out

    def __repr__(self):
        return (f"<Tree(n_nodes={self.n_nodes}, p={self.n_leaves}, "
                f"internal={len(self.internal_nodes)}, roots={len(self.kernel_nodes)})>")

# Aggregating set: nodes whose leaf sets partition the features
@dataclass(frozen=True, eq=False)
class AggregatingSet:
    node_indices: Tuple[int, ...]
    # group id of every feature column, ids follow node_indices order
    induced_partition: np.ndarray = field(repr=False)

    def node_ids(self, tree: Tree) -> List[str]:
        return [tree.node_ids[i] for i in self.node_indices]

    def __repr__(self):
        return f"<AggregatingSet(size={len(self.node_indices)})>"
