import logging
import math

import numpy as np
import pytest

from config import PathConfig, SolverConfig
from src.exceptions import DimensionMismatch, NegativeLambda, NonBinaryResponse, OutOfRange
from src.models.dataset import Dataset, LossKind
from src.services.penalty_service import make_spec, omega, prox
from src.services.simulation_service import gen_design
from src.services.solver_service import (
    design_constant, fista_fit, kernel_fit, lambda_max_tree, lipschitz_bound, loss_and_grad,
    root_group_map, solution_path, theory_lambda
)
from src.services.tree_service import theta
from tests.oracles import ista

DEFAULTS = SolverConfig()

def _finite_difference(f, beta, h=1e-6):
    grad = np.zeros_like(beta)
    for j in range(beta.size):
        e = np.zeros_like(beta)
        e[j] = h
        grad[j] = (f(beta + e) - f(beta - e)) / (2 * h)
    return grad

def _reference_objective(data, spec, lam, loss_kind):
    def loss(b):
        return loss_and_grad(loss_kind, data.X, data.y, b)[0]

    def grad(b):
        return loss_and_grad(loss_kind, data.X, data.y, b)[1]

    _, value = ista(data.X, data.y, grad, loss, lambda v, t: prox(spec, t, v), lambda b: omega(spec, b), lam)
    return value

class TestLoss:
    @pytest.mark.parametrize("loss_kind", [LossKind.SQUARED, LossKind.LOGISTIC])
    def test_gradient_matches_finite_differences(self, rng, loss_kind):
        X = rng.standard_normal((6, 4))
        y = (rng.random(6) < 0.5).astype(float) if loss_kind == LossKind.LOGISTIC else rng.standard_normal(6)
        beta = rng.standard_normal(4)
        offset = rng.standard_normal(6)
        _, grad = loss_and_grad(loss_kind, X, y, beta, offset)
        numeric = _finite_difference(lambda b: loss_and_grad(loss_kind, X, y, b, offset)[0], beta)
        np.testing.assert_allclose(grad, numeric, rtol=1e-5, atol=1e-9)

    def test_squared_loss_value(self):
        X = np.eye(2)
        value, _ = loss_and_grad(LossKind.SQUARED, X, np.array([1.0, 3.0]), np.zeros(2))
        assert value == pytest.approx(10.0 / 4.0)

    def test_logistic_needs_binary(self, rng):
        with pytest.raises(NonBinaryResponse):
            loss_and_grad(LossKind.LOGISTIC, np.ones((2, 1)), np.array([0.0, 2.0]), np.zeros(1))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            loss_and_grad(LossKind.SQUARED, np.ones((3, 2)), np.ones(3), np.ones(3))

class TestLipschitz:
    def test_matches_svd(self, rng):
        X = rng.standard_normal((20, 10))
        expected = np.linalg.norm(X, 2) ** 2 / 20
        assert lipschitz_bound(LossKind.SQUARED, X) == pytest.approx(expected, rel=1e-6)
        assert lipschitz_bound(LossKind.LOGISTIC, X) == pytest.approx(expected / 4, rel=1e-6)

    def test_poisson_design(self):
        X = gen_design(20, 10, 0.5, 3)
        expected = np.linalg.norm(X, 2) ** 2 / 20
        assert lipschitz_bound(LossKind.SQUARED, X) == pytest.approx(expected, rel=1e-5)

    def test_zero_design(self):
        assert lipschitz_bound(LossKind.SQUARED, np.zeros((5, 3))) == 0.0

class TestFistaFit:
    @pytest.mark.parametrize("lam", [0.02, 0.2, 1.0])
    def test_squared_objective_beats_reference(self, example_tree, gaussian_data, lam):
        spec = make_spec(example_tree)
        fit = fista_fit(gaussian_data, spec, lam, LossKind.SQUARED, DEFAULTS)
        assert fit.converged
        assert fit.objective <= _reference_objective(gaussian_data, spec, lam, LossKind.SQUARED) + 1e-6

    @pytest.mark.parametrize("lam", [0.01, 0.1])
    def test_logistic_objective_beats_reference(self, example_tree, binary_data, lam):
        spec = make_spec(example_tree)
        fit = fista_fit(binary_data, spec, lam, LossKind.LOGISTIC, DEFAULTS)
        assert fit.objective <= _reference_objective(binary_data, spec, lam, LossKind.LOGISTIC) + 1e-6

    @pytest.mark.parametrize("design", ["gaussian", "poisson", "correlated"])
    def test_zero_lambda_matches_least_squares(self, example_tree, rng, design):
        if design == "poisson":
            X = gen_design(120, 7, 1.0, 4)
        else:
            X = rng.standard_normal((120, 7))
            if design == "correlated":
                X[:, 1] = X[:, 0] + 0.3 * X[:, 1]
                X[:, 4] = X[:, 3] + 0.3 * X[:, 4]
        y = X @ np.array([1.0, -2.0, -2.0, 3.0, 3.0, 0.5, -1.0]) + 0.5 * rng.standard_normal(120)
        data = Dataset(X=X, y=y)
        fit = fista_fit(data, make_spec(example_tree), 0.0)
        assert fit.converged
        expected = np.linalg.lstsq(X, y, rcond=None)[0]
        np.testing.assert_allclose(fit.beta, expected, atol=1e-6)

    def test_objective_trace_is_monotone(self, example_tree, gaussian_data):
        fit = fista_fit(gaussian_data, make_spec(example_tree), 0.1)
        trace = np.array(fit.objective_trace)
        assert np.all(np.diff(trace) <= 1e-12 * np.abs(trace[:-1]))

    def test_large_lambda_equals_kernel_fit(self, example_tree, gaussian_data):
        spec = make_spec(example_tree)
        lam = 10 * lambda_max_tree(gaussian_data, spec)
        fit = fista_fit(gaussian_data, spec, lam, LossKind.SQUARED, DEFAULTS)
        assert np.ptp(fit.beta) <= 1e-9
        # aggregated least squares on the single root group
        H = root_group_map(example_tree)
        coef = np.linalg.lstsq(gaussian_data.X @ H, gaussian_data.y, rcond=None)[0]
        np.testing.assert_allclose(fit.beta, H @ coef, atol=1e-6)

    def test_forest_aggregates_per_root(self, forest, rng):
        X = rng.standard_normal((30, 4))
        data = Dataset(X=X, y=X @ np.array([1.0, 2.0, -1.0, 0.0]) + rng.standard_normal(30))
        spec = make_spec(forest)
        fit = fista_fit(data, spec, 10 * lambda_max_tree(data, spec), LossKind.SQUARED, DEFAULTS)
        assert fit.beta[0] == pytest.approx(fit.beta[1], abs=1e-9)
        assert fit.beta[2] == pytest.approx(fit.beta[3], abs=1e-9)
        np.testing.assert_allclose(fit.beta, kernel_fit(data, forest), atol=1e-6)

    def test_warm_start_reaches_same_objective(self, example_tree, gaussian_data):
        spec = make_spec(example_tree)
        cold = fista_fit(gaussian_data, spec, 0.1, LossKind.SQUARED, DEFAULTS)
        warm = fista_fit(gaussian_data, spec, 0.1, LossKind.SQUARED, DEFAULTS, warm_start=cold.beta)
        assert warm.objective == pytest.approx(cold.objective, rel=1e-9)
        assert warm.iterations <= cold.iterations

    def test_backtracking_agrees(self, example_tree, gaussian_data):
        spec = make_spec(example_tree)
        plain = fista_fit(gaussian_data, spec, 0.1, LossKind.SQUARED, DEFAULTS)
        config = DEFAULTS.model_copy(update={"backtracking": True})
        tracked = fista_fit(gaussian_data, spec, 0.1, LossKind.SQUARED, config)
        assert tracked.objective == pytest.approx(plain.objective, rel=1e-7)

    def test_iteration_cap_reports_unconverged(self, example_tree, gaussian_data, caplog):
        config = SolverConfig(max_iter=2, tol=1e-15)
        with caplog.at_level(logging.WARNING):
            fit = fista_fit(gaussian_data, make_spec(example_tree), 0.01, LossKind.SQUARED, config)
        assert not fit.converged
        assert fit.iterations == 2
        assert "without converging" in caplog.text

    def test_negative_lambda(self, example_tree, gaussian_data):
        with pytest.raises(NegativeLambda):
            fista_fit(gaussian_data, make_spec(example_tree), -1.0)

    def test_tree_size_mismatch(self, forest, gaussian_data):
        with pytest.raises(DimensionMismatch):
            fista_fit(gaussian_data, make_spec(forest), 0.1)

    def test_logistic_rejects_continuous_y(self, example_tree, gaussian_data):
        with pytest.raises(NonBinaryResponse):
            fista_fit(gaussian_data, make_spec(example_tree), 0.1, LossKind.LOGISTIC)

class TestPath:
    def test_grid_shape_and_first_fit(self, example_tree, gaussian_data):
        spec = make_spec(example_tree)
        path = solution_path(gaussian_data, spec, grid=PathConfig(n_lambda=8, lambda_min_ratio=1e-2))
        assert path.betas.shape == (8, 7)
        assert np.all(np.diff(path.lambdas) < 0)
        assert path.lambdas[-1] == pytest.approx(path.lambdas[0] * 1e-2)
        first = path.betas[0]
        assert np.ptp(first) <= 1e-6 * (1 + np.linalg.norm(first))

    def test_lambda_max_is_tight(self, example_tree, gaussian_data):
        spec = make_spec(example_tree)
        lam_max = lambda_max_tree(gaussian_data, spec)
        below = fista_fit(gaussian_data, spec, 0.5 * lam_max, LossKind.SQUARED, DEFAULTS)
        assert np.ptp(below.beta) > 1e-4

    def test_explicit_lambda_max(self, example_tree, gaussian_data):
        path = solution_path(
            gaussian_data, make_spec(example_tree), grid=PathConfig(n_lambda=3, lambda_max=2.0)
        )
        np.testing.assert_allclose(path.lambdas, [2.0, 2.0 * math.sqrt(1e-3), 2e-3])

    def test_supplied_lambdas(self, example_tree, gaussian_data):
        path = solution_path(gaussian_data, make_spec(example_tree), lambdas=np.array([0.5, 0.1]))
        assert [f.lambda_ for f in path.fits] == [0.5, 0.1]

class TestTheoryDiagnostics:
    def test_theory_lambda_formula(self, example_tree):
        expected = 4 * math.sqrt(2) / 10 * theta(example_tree) * math.sqrt(math.log(14) + math.log(4))
        assert theory_lambda(example_tree, 1.0, 1.0, 100, 7) == pytest.approx(expected, rel=1e-12)

    def test_theory_lambda_rejects_nonpositive_sigma(self, example_tree):
        with pytest.raises(OutOfRange):
            theory_lambda(example_tree, 0.0, 1.0, 100, 7)

    def test_design_constant(self, example_tree, rng):
        X = rng.standard_normal((25, 7))
        expected = max(
            np.linalg.svd(X[:, example_tree.leaf_set(int(node))] / 5.0, compute_uv=False)[0]
            for node in example_tree.internal_nodes
        )
        assert design_constant(X, example_tree) == pytest.approx(expected, rel=1e-10)
