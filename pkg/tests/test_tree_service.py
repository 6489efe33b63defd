import math

import numpy as np
import pytest

from src.exceptions import (
    CannotDeleteLeaf, CannotDeleteRoot, CycleDetected, DanglingParent, DuplicateLeafColumn,
    EmptyInput, MalformedInput, MissingLeafColumn, TooFewInternalNodes
)
from src.models.tree import NodeRecord, Tree
from src.repositories.tree_repository import parse_tree
from src.services.tree_service import (
    coarsest_aggregating_set, delete_by_id, delete_internal_nodes, is_aggregating_set,
    node_status, partition_of, theta
)

def _ids(tree, nodes):
    return {tree.node_ids[int(i)] for i in nodes}

def _groups(partition):
    return sorted(tuple(int(j) for j in g) for g in partition.groups())

class TestTreeConstruction:
    def test_example_tree_structure(self, example_tree):
        assert _ids(example_tree, example_tree.internal_nodes) == {"b8", "b9", "b10", "b11"}
        a = {example_tree.node_ids[i]: int(example_tree.a[i]) for i in example_tree.internal_nodes}
        assert a == {"b11": 7, "b9": 3, "b8": 2, "b10": 2}
        assert _ids(example_tree, example_tree.kernel_nodes) == {"b11"}

    def test_forest_has_two_roots_in_top_layer(self, forest):
        assert len(forest.kernel_nodes) == 2
        assert _ids(forest, forest.layers[0]) == {"r0", "r1"}

    def test_leaf_ranges_are_contiguous(self, rng, tree_factory):
        for _ in range(20):
            tree = tree_factory(int(rng.integers(2, 13)), rng)
            for node in range(tree.n_nodes):
                if tree.is_leaf(node):
                    continue
                union = np.sort(np.concatenate([tree.leaf_set(c) for c in tree.children[node]]))
                assert np.array_equal(union, tree.leaf_set(node))

    def test_layer_plan_covers_internal_nodes_once(self, example_tree):
        planned = np.concatenate([layer.nodes for layer in example_tree.plan])
        assert sorted(planned.tolist()) == sorted(example_tree.internal_nodes.tolist())
        depths = [layer.depth for layer in example_tree.plan]
        assert depths == sorted(depths, reverse=True)

    def test_cycle_is_rejected(self):
        records = [NodeRecord("a", "b", None), NodeRecord("b", "a", None)]
        with pytest.raises(CycleDetected):
            Tree.from_records(records, 1)

    def test_dangling_parent(self):
        with pytest.raises(DanglingParent):
            parse_tree("r\t-\t-\nx\tr\t0\ny\tq\t1\n", 2)

    def test_duplicate_leaf_column(self):
        with pytest.raises(DuplicateLeafColumn):
            parse_tree("r\t-\t-\nx\tr\t0\ny\tr\t0\n", 2)

    def test_missing_leaf_column(self):
        with pytest.raises(MissingLeafColumn) as info:
            parse_tree("r\t-\t-\nx\tr\t0\ny\tr\t1\n", 3)
        assert info.value.col == 2

    def test_leaf_without_column(self):
        with pytest.raises(MalformedInput):
            parse_tree("r\t-\t-\nx\tr\t0\ny\tr\t-\n", 2)

    def test_empty_document(self):
        with pytest.raises(EmptyInput):
            parse_tree("# nothing here\n\n", 3)

class TestAggregatingSets:
    def test_merged_b8_b10(self, example_tree):
        merged = np.zeros(example_tree.n_nodes, dtype=bool)
        merged[[example_tree.index["b8"], example_tree.index["b10"]]] = True
        agg = coarsest_aggregating_set(example_tree, merged)
        assert set(agg.node_ids(example_tree)) == {"b6", "b7", "b1", "b8", "b10"}
        assert _groups(partition_of(agg)) == [(0,), (1, 2), (3, 4), (5,), (6,)]

    def test_mapping_flags_and_ancestor_wins(self, example_tree):
        merged = {example_tree.index["b9"]: True, example_tree.index["b8"]: True}
        agg = coarsest_aggregating_set(example_tree, merged)
        assert "b8" not in agg.node_ids(example_tree)
        assert "b9" in agg.node_ids(example_tree)

    def test_nothing_merged_gives_singletons(self, example_tree):
        agg = coarsest_aggregating_set(example_tree, np.zeros(example_tree.n_nodes, dtype=bool))
        assert len(agg.node_indices) == 7

    def test_result_is_always_aggregating(self, rng, tree_factory):
        for _ in range(20):
            tree = tree_factory(int(rng.integers(2, 13)), rng)
            merged = rng.random(tree.n_nodes) < 0.4
            agg = coarsest_aggregating_set(tree, merged)
            assert is_aggregating_set(tree, agg.node_indices)

    def test_overlap_is_not_aggregating(self, example_tree):
        idx = example_tree.index
        assert not is_aggregating_set(example_tree, [idx["b9"], idx["b8"], idx["b10"], idx["b6"], idx["b7"]])
        assert not is_aggregating_set(example_tree, [idx["b9"], idx["b10"]])

class TestTheta:
    def test_example_tree(self, example_tree):
        expected = math.sqrt(7) * (1 + math.sqrt(7 / math.log(4)))
        assert theta(example_tree) == pytest.approx(expected, rel=1e-12)
        assert theta(example_tree) == pytest.approx(8.5906, abs=1e-3)

    def test_star_with_one_split(self):
        tree = parse_tree("r\t-\t-\nu\tr\t-\nv\tr\t-\na\tu\t0\nb\tu\t1\nc\tv\t2\nd\tv\t3\n", 4)
        assert theta(tree) == pytest.approx(2 * (1 + math.sqrt(4 / math.log(3))), rel=1e-12)

    def test_single_internal_node(self):
        tree = parse_tree("r\t-\t-\na\tr\t0\nb\tr\t1\n", 2)
        with pytest.raises(TooFewInternalNodes):
            theta(tree)

    def test_invariant_to_relabeling(self, example_tree):
        records = [
            NodeRecord(f"z_{rec.node_id}", f"z_{rec.parent_id}" if rec.parent_id else None,
                       None if rec.leaf_col is None else 6 - rec.leaf_col)
            for rec in example_tree.to_records()
        ]
        assert theta(Tree.from_records(records, 7)) == theta(example_tree)

class TestDeletion:
    def test_delete_b9(self, example_tree):
        pruned = delete_by_id(example_tree, ["b9"])
        assert _ids(pruned, pruned.internal_nodes) == {"b8", "b10", "b11"}
        root = pruned.index["b11"]
        assert pruned.parent[pruned.index["b1"]] == root
        assert pruned.parent[pruned.index["b8"]] == root

    def test_delete_chain(self, example_tree):
        pruned = delete_by_id(example_tree, ["b8", "b9"])
        assert _ids(pruned, pruned.internal_nodes) == {"b10", "b11"}
        assert pruned.p == 7

    def test_cannot_delete_root(self, example_tree):
        with pytest.raises(CannotDeleteRoot):
            delete_by_id(example_tree, ["b11"])

    def test_cannot_delete_leaf(self, example_tree):
        with pytest.raises(CannotDeleteLeaf):
            delete_internal_nodes(example_tree, [example_tree.index["b3"]])

    def test_empty_victims_is_identity(self, example_tree):
        assert delete_internal_nodes(example_tree, []) is example_tree

class TestNodeStatus:
    def test_zero_exactly_where_constant(self, example_tree):
        beta = np.array([1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 5.0])
        status = node_status(example_tree, beta)
        idx = example_tree.index
        assert status[idx["b8"]] == 0.0
        assert status[idx["b10"]] == 0.0
        assert status[idx["b9"]] > 0.0
        assert status[idx["b11"]] > 0.0
