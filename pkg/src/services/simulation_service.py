"""
Deterministic generators for the simulation studies: guiding trees, true groups and
effects, Poisson designs and gaussian / bernoulli responses.

All randomness comes from Philox generators keyed by (seed, stream, *keys), so every
stream of every replication is independent of evaluation order.
"""
import logging
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.cluster.hierarchy import linkage
from scipy.special import expit

from src.dto.simulation_dto import ResponseKindEnum, ScenarioEnum, SimConfig, TreeVariantEnum
from src.exceptions import DimensionMismatch, IndivisibleSizes, MalformedInput, OutOfRange, UnknownVariant, ZeroSignal
from src.models.dataset import Dataset
from src.models.simulation import GroundTruth, Replicate
from src.models.tree import NodeRecord, Tree
from src.services.tree_service import (
    coarsest_aggregating_set, delete_by_id, is_aggregating_set, partition_of
)

logger = logging.getLogger(__name__)

STREAMS: Dict[str, int] = {
    "design": 1,
    "effects": 2,
    "noise": 3,
    "tree": 4,
    "fission": 5,
    "folds": 6,
    "split": 7,
}

EXP2_META_STRUCTURE = (
    "root -> h0, h1; each h -> 2 quarter nodes; each quarter -> 5 aggregating nodes a0..a19; "
    "every a_k roots an identical copy of one random average-linkage subtree over p_s leaves"
)

def make_rng(seed: int, stream: str, *keys: int) -> np.random.Generator:
    if stream not in STREAMS:
        raise MalformedInput(f"Unknown random stream '{stream}'")
    entropy = [int(seed), STREAMS[stream], *(int(k) for k in keys)]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))

# ===============================
# Effects, designs, responses
# ===============================

def gen_effects(K: int, seed: int, *keys: int) -> np.ndarray:
    """K draws from Uniform(1.5, 2.5) with signs +, -, +, ..."""
    if K < 1:
        raise OutOfRange(f"K must be >= 1, got {K}")
    magnitudes = make_rng(seed, "effects", *keys).uniform(1.5, 2.5, size=K)
    return magnitudes * np.where(np.arange(K) % 2 == 0, 1.0, -1.0)

def gen_design(n: int, p: int, rate: float, seed: int, *keys: int) -> np.ndarray:
    if rate <= 0:
        raise OutOfRange(f"Poisson rate must be > 0, got {rate}")
    return make_rng(seed, "design", *keys).poisson(rate, size=(n, p)).astype(float)

def response_sigma(X: np.ndarray, beta_star: np.ndarray, snr_divisor: float) -> float:
    """sigma = ||X beta*|| / sqrt(snr_divisor * n)"""
    signal = X @ beta_star
    norm2 = float(np.dot(signal, signal))
    if norm2 == 0.0:
        raise ZeroSignal("X beta* is zero; the gaussian noise level is undefined")
    return float(np.sqrt(norm2 / (snr_divisor * X.shape[0])))

def gen_response(
        X: np.ndarray,
        beta_star: np.ndarray,
        kind: ResponseKindEnum,
        snr_divisor: float,
        seed: int,
        *keys: int,
        sigma: Optional[float] = None
) -> np.ndarray:
    X = np.atleast_2d(np.asarray(X, dtype=float))
    beta_star = np.asarray(beta_star, dtype=float)
    if X.shape[1] != beta_star.shape[0]:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, beta* has {beta_star.shape[0]} entries")
    rng = make_rng(seed, "noise", *keys)
    signal = X @ beta_star
    if ResponseKindEnum(kind) == ResponseKindEnum.BERNOULLI:
        return (rng.random(X.shape[0]) < expit(signal)).astype(float)
    if sigma is None:
        sigma = response_sigma(X, beta_star, snr_divisor)
    return signal + sigma * rng.standard_normal(X.shape[0])

# ===============================
# Ground truth
# ===============================

def ground_truth(tree: Tree, group_ids: Sequence[str], effects: np.ndarray) -> GroundTruth:
    """beta* equal to effects[k] on the leaves of the k-th group node (groups in tree order)"""
    nodes = [tree.index[node_id] for node_id in group_ids]
    if not is_aggregating_set(tree, nodes):
        raise MalformedInput("True group nodes do not form an aggregating set")
    merged = np.zeros(tree.n_nodes, dtype=bool)
    merged[nodes] = True
    aggregating_set = coarsest_aggregating_set(tree, merged)
    partition = partition_of(aggregating_set)
    beta_star = np.asarray(effects, dtype=float)[partition.labels]
    beta_star.setflags(write=False)
    return GroundTruth(
        tree=tree,
        beta_star=beta_star,
        partition_star=partition,
        aggregating_set_star=aggregating_set,
    )

def _leaf_id(col: int) -> str:
    return f"x{col:02d}"

# ===============================
# Fixed tree with variants (exp1)
# ===============================

_EXP1_ABOVE = [
    ("root", None), ("u1", "root"), ("u2", "root"),
    ("u3", "u1"), ("u4", "u1"), ("u5", "u4"),
    ("u6", "u2"), ("u7", "u2"), ("u8", "u7"),
]
_EXP1_GROUP_PARENT = ["u3", "u3", "u4", "u5", "u5", "u6", "u6", "u7", "u8", "u8"]
_EXP1_ABOVE_DELETIONS = ["u5", "u8", "u3", "u1", "u2", "u6"]

def _exp1_records() -> Tuple[List[NodeRecord], List[str]]:
    records = [NodeRecord(node_id, parent, None) for node_id, parent in _EXP1_ABOVE]
    col = 0

    def pair_then_leaf(parent: str, pair_id: str) -> None:
        nonlocal col
        records.append(NodeRecord(pair_id, parent, None))
        records.append(NodeRecord(_leaf_id(col), pair_id, col))
        records.append(NodeRecord(_leaf_id(col + 1), pair_id, col + 1))
        records.append(NodeRecord(_leaf_id(col + 2), parent, col + 2))
        col += 3

    for k, parent in enumerate(_EXP1_GROUP_PARENT):
        group = f"g{k}"
        records.append(NodeRecord(group, parent, None))
        if k < 5:
            for j in range(3):
                triplet = f"{group}_t{j}"
                records.append(NodeRecord(triplet, group, None))
                pair_then_leaf(triplet, f"{triplet}_p")
        else:
            pair_then_leaf(group, f"{group}_p")
    return records, [f"g{k}" for k in range(10)]

def exp1_below_deletions() -> List[str]:
    pairs = [f"g{k}_t{j}_p" for k in range(5) for j in range(3)]
    triplets = [f"g{k}_t{j}" for k in range(5) for j in range(3)]
    small_pairs = [f"g{k}_p" for k in range(5, 10)]
    return pairs + triplets + small_pairs

def gen_tree_exp1(variant: TreeVariantEnum = TreeVariantEnum.T0) -> Tree:
    """
    60 leaves in 10 true groups (five of 9 features, five of 3). T1-T3 delete 10/20/30
    nodes below the groups, T4/T5 delete 3/6 nodes above; group nodes always survive.
    """
    try:
        variant = TreeVariantEnum(variant)
    except ValueError:
        raise UnknownVariant(f"Unknown tree variant '{variant}'")
    records, _ = _exp1_records()
    tree = Tree.from_records(records, 60)
    below = {TreeVariantEnum.T1: 10, TreeVariantEnum.T2: 20, TreeVariantEnum.T3: 30}
    above = {TreeVariantEnum.T4: 3, TreeVariantEnum.T5: 6}
    if variant in below:
        tree = delete_by_id(tree, exp1_below_deletions()[:below[variant]])
    elif variant in above:
        tree = delete_by_id(tree, _EXP1_ABOVE_DELETIONS[:above[variant]])
    return tree

def exp1_ground_truth(variant: TreeVariantEnum, seed: int, *keys: int) -> GroundTruth:
    _, groups = _exp1_records()
    return ground_truth(gen_tree_exp1(variant), groups, gen_effects(10, seed, *keys))

# ===============================
# Average-linkage trees
# ===============================

def _linkage_records(
        points: np.ndarray,
        leaf_ids: Sequence[str],
        leaf_cols: Sequence[Optional[int]],
        root_id: str,
        parent_id: Optional[str],
        prefix: str
) -> List[NodeRecord]:
    """
    Binary tree of an average-linkage clustering of `points`, root first. Leaf ids and
    columns are given per point; a leaf with column None is a placeholder for a subtree
    attached by the caller.
    """
    m = len(points)
    if m == 1:
        return [NodeRecord(leaf_ids[0], parent_id, leaf_cols[0])]
    Z = linkage(points, method="average")
    names = list(leaf_ids) + [f"{prefix}{i}" for i in range(m - 2)] + [root_id]
    parents: Dict[int, int] = {}
    for i, (left, right) in enumerate(Z[:, :2].astype(int)):
        parents[left] = m + i
        parents[right] = m + i

    records = []
    stack = [2 * m - 2]
    while stack:
        node = stack.pop()
        parent = parents.get(node)
        records.append(NodeRecord(
            names[node],
            names[parent] if parent is not None else parent_id,
            leaf_cols[node] if node < m else None,
        ))
        if node >= m:
            left, right = Z[node - m, :2].astype(int)
            stack.extend([right, left])
    return records

def _drop_placeholders(records: List[NodeRecord], placeholders: set) -> List[NodeRecord]:
    return [rec for rec in records if rec.node_id not in placeholders]

def gen_tree_hclust(p: int, K: int, seed: int, *keys: int) -> GroundTruth:
    """
    First K/2 groups hold 3p/2K features, the rest p/2K, in contiguous columns. Each
    group is an average-linkage subtree of its own 2-d latent points; the group roots
    are joined by average linkage on the group centroids.
    """
    if K < 1 or K % 2 != 0 or p % (2 * K) != 0:
        raise IndivisibleSizes(
            f"Group sizes 3p/2K and p/2K must be integers (K even, 2K | p); got p={p}, K={K}"
        )
    sizes = [3 * p // (2 * K)] * (K // 2) + [p // (2 * K)] * (K // 2)
    rng = make_rng(seed, "tree", *keys)

    group_ids = [f"g{k}" for k in range(K)]
    records: List[NodeRecord] = []
    centroids = []
    col = 0
    subtrees = []
    for k, size in enumerate(sizes):
        points = rng.standard_normal((size, 2)) + 3.0 * rng.standard_normal(2)
        centroids.append(points.mean(axis=0))
        cols = list(range(col, col + size))
        if size == 1:
            subtrees.append([NodeRecord(group_ids[k], "__top__", cols[0])])
        else:
            subtrees.append(_linkage_records(
                points, [_leaf_id(c) for c in cols], cols, group_ids[k], "__top__", f"g{k}_n"
            ))
        col += size

    if K == 1:
        top_parent = {group_ids[0]: None}
    else:
        top = _linkage_records(
            np.vstack(centroids), group_ids, [None] * K, "root", None, "u"
        )
        top_parent = {rec.node_id: rec.parent_id for rec in top}
        records.extend(_drop_placeholders(top, set(group_ids)))
    for k, subtree in enumerate(subtrees):
        for rec in subtree:
            parent = top_parent[rec.node_id] if rec.node_id == group_ids[k] else rec.parent_id
            records.append(NodeRecord(rec.node_id, parent, rec.leaf_col))

    tree = Tree.from_records(records, p)
    return ground_truth(tree, group_ids, gen_effects(K, seed, *keys))

def gen_tree_blocks(p: int, K: int) -> GroundTruth:
    """Root over group nodes g0..g{K-1}, each holding a contiguous block of near-equal size"""
    if not 2 <= K <= p:
        raise OutOfRange(f"Block tree needs 2 <= K <= p; got p={p}, K={K}")
    group_ids = [f"g{k}" for k in range(K)]
    records = [NodeRecord("root", None, None)]
    for k, cols in enumerate(np.array_split(np.arange(p), K)):
        if cols.size == 1:
            records.append(NodeRecord(group_ids[k], "root", int(cols[0])))
            continue
        records.append(NodeRecord(group_ids[k], "root", None))
        records.extend(NodeRecord(_leaf_id(int(c)), group_ids[k], int(c)) for c in cols)
    return ground_truth(Tree.from_records(records, p), group_ids, np.zeros(K))

def gen_tree_exp2(p_s: int, seed: int = 0, *keys: int) -> GroundTruth:
    """K = 20 group nodes under a fixed two-level meta-structure, p = 20 * p_s"""
    if p_s < 1:
        raise OutOfRange(f"p_s must be >= 1, got {p_s}")
    K = 20
    records = [NodeRecord("root", None, None)]
    group_ids = [f"a{k}" for k in range(K)]
    for h in range(2):
        records.append(NodeRecord(f"h{h}", "root", None))
        for q in range(2):
            quarter = f"h{h}q{q}"
            records.append(NodeRecord(quarter, f"h{h}", None))
            for k in range(5 * (2 * h + q), 5 * (2 * h + q) + 5):
                records.append(NodeRecord(group_ids[k], quarter, k if p_s == 1 else None))

    if p_s > 1:
        points = make_rng(seed, "tree", *keys).standard_normal((p_s, 2))
        for k in range(K):
            cols = list(range(k * p_s, (k + 1) * p_s))
            subtree = _linkage_records(
                points, [_leaf_id(c) for c in cols], cols, group_ids[k], "__top__", f"a{k}_n"
            )
            records.extend(NodeRecord(rec.node_id, rec.parent_id, rec.leaf_col) for rec in subtree[1:])

    tree = Tree.from_records(records, K * p_s)
    return ground_truth(tree, group_ids, gen_effects(K, seed, *keys))

# ===============================
# Replicates
# ===============================

def scenario_truth(config: SimConfig, rep: int = 0) -> GroundTruth:
    if config.scenario == ScenarioEnum.EXP1:
        return exp1_ground_truth(config.tree_variant, config.seed, rep)
    if config.scenario == ScenarioEnum.EXP2:
        return gen_tree_exp2(config.p_s, config.seed, rep)
    return gen_tree_hclust(config.p, config.K, config.seed, rep)

def simulate_replicate(config: SimConfig, rep: int = 0) -> Replicate:
    """Train and validation sets of size n and a test set, all sharing the noise level of train"""
    truth = scenario_truth(config, rep)
    beta_star = truth.beta_star
    sizes = [config.n, config.n, config.test_size]
    designs = [gen_design(size, config.p, config.poisson_rate, config.seed, rep, part)
               for part, size in enumerate(sizes)]
    sigma = None
    if config.response == ResponseKindEnum.GAUSSIAN:
        sigma = response_sigma(designs[0], beta_star, config.snr_divisor)
    datasets = [
        Dataset(
            X=X,
            y=gen_response(X, beta_star, config.response, config.snr_divisor,
                           config.seed, rep, part, sigma=sigma),
        )
        for part, X in enumerate(designs)
    ]
    logger.debug(f"Simulated {config.scenario.value} replicate {rep} (p={config.p}, K={truth.K})")
    return Replicate(truth=truth, train=datasets[0], valid=datasets[1], test=datasets[2], rep=rep)
