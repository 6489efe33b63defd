import math

import numpy as np
import pytest

from src.exceptions import DimensionMismatch, NegativeLambda, OutOfRange
from src.models.penalty import PenaltySpec
from src.models.tree import Tree
from src.services.penalty_service import (
    default_weights, make_spec, omega, prox, prox_group_update, prox_permuted
)
from src.services.tree_service import node_status
from tests.oracles import centering_operators, dual_prox, penalty_value, prox_objective

def _prox_oracle_case(tree_factory, rng):
    tree = tree_factory(int(rng.integers(2, 13)), rng)
    spec = make_spec(tree)
    eta = rng.standard_normal(tree.p) * 2.0
    lam = float(rng.uniform(0.05, 2.0))
    ours = prox(spec, lam, eta)
    reference = dual_prox(spec, lam, eta)
    blocks = centering_operators(spec)
    # strong convexity: the exact prox is never beaten and pins the reference
    assert prox_objective(blocks, lam, eta, ours) <= prox_objective(blocks, lam, eta, reference) + 1e-10
    np.testing.assert_allclose(ours, reference, atol=1e-4)

class TestWeights:
    def test_example_tree_defaults(self, example_tree):
        w = default_weights(example_tree)
        idx = example_tree.index
        got = [w[idx[k]] for k in ("b11", "b9", "b8", "b10")]
        np.testing.assert_allclose(got, [7 ** -0.5, 3 ** -0.5, 2 ** -0.5, 2 ** -0.5])
        assert w[idx["b1"]] == 0.0

    def test_negative_weight_rejected(self, example_tree):
        w = default_weights(example_tree)
        w[example_tree.index["b9"]] = -1.0
        with pytest.raises(OutOfRange):
            PenaltySpec(tree=example_tree, weights=w)

    def test_wrong_weight_count(self, example_tree):
        with pytest.raises(DimensionMismatch):
            PenaltySpec(tree=example_tree, weights=np.ones(3))

class TestOmega:
    def test_constant_vector_is_free(self, example_tree):
        assert omega(make_spec(example_tree), np.ones(7)) == 0.0

    def test_first_basis_vector(self, example_tree):
        beta = np.zeros(7)
        beta[0] = 1.0
        expected = math.sqrt(6) / 7 + math.sqrt(2) / 3
        assert omega(make_spec(example_tree), beta) == pytest.approx(expected, rel=1e-12)

    def test_matches_dense_definition(self, rng, tree_factory):
        for _ in range(10):
            tree = tree_factory(int(rng.integers(2, 13)), rng)
            spec = make_spec(tree)
            beta = rng.standard_normal(tree.p)
            assert omega(spec, beta) == pytest.approx(penalty_value(centering_operators(spec), beta), rel=1e-10)

    def test_wrong_length(self, example_tree):
        with pytest.raises(DimensionMismatch):
            omega(make_spec(example_tree), np.ones(6))

class TestGroupUpdate:
    def test_large_threshold_collapses_to_mean(self):
        out = prox_group_update(np.array([1.0, 2.0, 6.0, 9.0]), (0, 3), 100.0)
        np.testing.assert_allclose(out, [3.0, 3.0, 3.0, 9.0])

    def test_small_threshold_shrinks_towards_mean(self):
        v = np.array([0.0, 4.0])
        out = prox_group_update(v, slice(0, 2), 1.0)
        # centered norm 2*sqrt(2), rho = 1 / (2 sqrt 2)
        rho = 1.0 / (2.0 * math.sqrt(2.0))
        np.testing.assert_allclose(out, rho * 2.0 + (1 - rho) * v)
        assert out.sum() == pytest.approx(v.sum())

    def test_zero_threshold_is_identity(self):
        v = np.array([3.0, -1.0, 2.0])
        np.testing.assert_array_equal(prox_group_update(v, (0, 3), 0.0), v)

class TestProx:
    def test_lambda_zero_is_identity(self, example_tree, rng):
        eta = rng.standard_normal(7)
        np.testing.assert_array_equal(prox(make_spec(example_tree), 0.0, eta), eta)

    def test_huge_lambda_gives_root_means(self, forest):
        eta = np.array([1.0, 3.0, -2.0, 8.0])
        np.testing.assert_allclose(prox(make_spec(forest), 1e6, eta), [2.0, 2.0, 3.0, 3.0])

    def test_root_sums_are_preserved(self, rng, tree_factory):
        for _ in range(10):
            tree = tree_factory(int(rng.integers(2, 13)), rng)
            eta = rng.standard_normal(tree.p)
            out = prox(make_spec(tree), float(rng.uniform(0.1, 3.0)), eta)
            for root in tree.kernel_nodes:
                cols = tree.leaf_set(int(root))
                assert out[cols].sum() == pytest.approx(eta[cols].sum(), abs=1e-12)

    def test_commutes_with_kernel_shift(self, example_tree, rng):
        spec = make_spec(example_tree)
        eta = rng.standard_normal(7)
        np.testing.assert_allclose(prox(spec, 0.7, eta + 5.0), prox(spec, 0.7, eta) + 5.0, atol=1e-12)

    def test_compensated_means_agree(self, example_tree, rng):
        spec = make_spec(example_tree)
        eta = example_tree.to_permuted(rng.standard_normal(7))
        np.testing.assert_allclose(
            prox_permuted(spec, 0.4, eta, compensated_threshold=1),
            prox_permuted(spec, 0.4, eta),
            atol=1e-14,
        )

    def test_nonexpansive(self, rng, tree_factory):
        for _ in range(50):
            tree = tree_factory(int(rng.integers(2, 16)), rng)
            spec = make_spec(tree)
            lam = float(rng.uniform(0.05, 3.0))
            a, b = rng.standard_normal(tree.p) * 3.0, rng.standard_normal(tree.p) * 3.0
            gap = np.linalg.norm(prox(spec, lam, a) - prox(spec, lam, b))
            assert gap <= np.linalg.norm(a - b) * (1.0 + 1e-12)

    def test_aggregation_is_monotone_in_lambda(self, rng, tree_factory):
        for _ in range(30):
            tree = tree_factory(int(rng.integers(3, 16)), rng)
            spec = make_spec(tree)
            eta = rng.standard_normal(tree.p) * 2.0
            internal = tree.internal_nodes
            merged_before = np.zeros(internal.size, dtype=bool)
            for lam in np.geomspace(0.01, 20.0, 40):
                merged = node_status(tree, prox(spec, float(lam), eta))[internal] <= 1e-10
                assert not np.any(merged_before & ~merged)
                merged_before = merged

    def test_sibling_order_does_not_matter(self, rng, tree_factory):
        for _ in range(20):
            tree = tree_factory(int(rng.integers(3, 16)), rng)
            records = tree.to_records()
            shuffled = Tree.from_records([records[i] for i in rng.permutation(len(records))], tree.p)
            eta = rng.standard_normal(tree.p) * 2.0
            lam = float(rng.uniform(0.05, 3.0))
            np.testing.assert_allclose(
                prox(make_spec(shuffled), lam, eta), prox(make_spec(tree), lam, eta),
                rtol=0, atol=1e-12 * (1.0 + np.abs(eta).max()),
            )

    def test_negative_lambda(self, example_tree):
        with pytest.raises(NegativeLambda):
            prox(make_spec(example_tree), -0.1, np.zeros(7))

    def test_wrong_length(self, example_tree):
        with pytest.raises(DimensionMismatch):
            prox(make_spec(example_tree), 0.1, np.zeros(8))

    def test_matches_dual_solver(self, rng, tree_factory):
        for _ in range(15):
            _prox_oracle_case(tree_factory, rng)

    def test_eight_leaf_three_level_tree(self, rng, tree_factory):
        tree = tree_factory(8, rng, max_depth=3)
        spec = make_spec(tree)
        eta = rng.standard_normal(8)
        ours, reference = prox(spec, 0.3, eta), dual_prox(spec, 0.3, eta, iterations=200000)
        blocks = centering_operators(spec)
        assert prox_objective(blocks, 0.3, eta, ours) <= prox_objective(blocks, 0.3, eta, reference) + 1e-12
        np.testing.assert_allclose(ours, reference, atol=1e-5)

@pytest.mark.slow
def test_prox_matches_dual_solver_on_200_trees(tree_factory):
    rng = np.random.default_rng(7)
    for _ in range(200):
        _prox_oracle_case(tree_factory, rng)
