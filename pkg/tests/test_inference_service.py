import numpy as np
import pytest
from scipy.special import expit, logit

from config import PathConfig
from src.exceptions import (
    DeltaOutOfRange, DimensionMismatch, InputError, NonBinaryResponse, OutOfRange, Separation
)
from src.models.dataset import Dataset
from src.services.inference_service import (
    aggregate_design, bh_adjust, fission, glm_logistic_offset, null_calibration,
    run_fission_inference, wald_contrasts
)
from src.services.selection_service import partition_from_labels

SMALL_GRID = PathConfig(n_lambda=8, lambda_min_ratio=1e-2)

def _newton(X, y, offsets, iterations=50):
    b = np.zeros(X.shape[1])
    for _ in range(iterations):
        mu = expit(offsets + X @ b)
        b = b + np.linalg.solve((X.T * (mu * (1 - mu))) @ X, X.T @ (y - mu))
    return b

@pytest.fixture
def inference_data(rng) -> Dataset:
    X = rng.standard_normal((300, 7))
    beta = np.array([0.8, -0.6, -0.6, 0.4, 0.4, 0.0, 0.0])
    y = (rng.random(300) < expit(X @ beta)).astype(float)
    return Dataset(X=X, y=y)

class TestFission:
    def test_offsets_and_second_half(self, rng):
        y = (rng.random(50) < 0.5).astype(float)
        split = fission(y, 0.9, seed=3)
        np.testing.assert_array_equal(split.y2, y)
        np.testing.assert_allclose(split.offsets[split.y1 == 1], np.log(1 / 9))
        np.testing.assert_allclose(split.offsets[split.y1 == 0], np.log(9))

    def test_deterministic(self, rng):
        y = (rng.random(50) < 0.5).astype(float)
        np.testing.assert_array_equal(fission(y, 0.8, 1).y1, fission(y, 0.8, 1).y1)

    def test_marginal_of_first_half(self):
        # P(y1 = 1) = pi (1 - delta) + (1 - pi) delta = 0.66 for pi = 0.3, delta = 0.9
        n = 20000
        y = (np.random.default_rng(5).random(n) < 0.3).astype(float)
        y1 = fission(y, 0.9, seed=8).y1
        assert abs(y1.mean() - 0.66) <= 5 * np.sqrt(0.66 * 0.34 / n)

    @pytest.mark.parametrize("delta", [0.5, 1.0, 0.2])
    def test_delta_range(self, delta):
        with pytest.raises(DeltaOutOfRange):
            fission(np.array([0.0, 1.0]), delta, 0)

    def test_needs_binary(self):
        with pytest.raises(NonBinaryResponse):
            fission(np.array([0.0, 2.0]), 0.9, 0)

class TestAggregation:
    def test_row_sums_per_group(self):
        X = np.array([[1.0, 2.0, 3.0], [0.0, 1.0, 1.0]])
        out = aggregate_design(X, partition_from_labels([0, 0, 1]))
        np.testing.assert_array_equal(out, [[3.0, 3.0], [1.0, 1.0]])

    def test_width_mismatch(self):
        with pytest.raises(DimensionMismatch):
            aggregate_design(np.ones((2, 3)), partition_from_labels([0, 1]))

class TestOffsetGlm:
    def test_intercept_only(self):
        y = np.array([1.0, 1.0, 1.0] + [0.0] * 7)
        fit = glm_logistic_offset(np.ones((10, 1)), y, np.zeros(10))
        assert fit.coef[0] == pytest.approx(logit(0.3), abs=1e-8)

    def test_matches_newton_with_offsets(self, rng):
        X = np.column_stack([np.ones(200), rng.poisson(1.0, size=(200, 2))])
        offsets = np.where(rng.random(200) < 0.5, np.log(1 / 9), np.log(9))
        y = (rng.random(200) < expit(offsets + X @ np.array([-0.5, 0.3, 0.2]))).astype(float)
        fit = glm_logistic_offset(X, y, offsets)
        np.testing.assert_allclose(fit.coef, _newton(X, y, offsets), atol=1e-7)
        assert fit.score_norm <= 1e-8
        assert fit.cov.shape == (3, 3)

    def test_aliased_column_is_dropped(self, rng):
        base = rng.poisson(1.0, size=(100, 2)).astype(float)
        X = np.column_stack([base, 2.0 * base[:, 0]])
        y = (rng.random(100) < 0.5).astype(float)
        fit = glm_logistic_offset(X, y, np.zeros(100))
        assert len(fit.dropped) == 1
        assert np.isnan(fit.coef).sum() == 1
        assert not np.isnan(fit.coef[1])

    def test_separation(self):
        x = np.concatenate([np.linspace(-2, -0.1, 10), np.linspace(0.1, 2, 10)])
        y = (x > 0).astype(float)
        with pytest.raises(Separation):
            glm_logistic_offset(x.reshape(-1, 1), y, np.zeros(20))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            glm_logistic_offset(np.ones((3, 1)), np.ones(3), np.zeros(4))

class TestWald:
    @pytest.fixture
    def fit(self, rng):
        X = np.column_stack([np.ones(200), rng.poisson(1.0, size=200)])
        y = (rng.random(200) < expit(X @ np.array([0.2, -0.4]))).astype(float)
        return glm_logistic_offset(X, y, np.zeros(200))

    def test_basis_contrast(self, fit):
        (result,) = wald_contrasts(fit, [("b1", np.array([0.0, 1.0]))])
        assert result.z == pytest.approx(fit.coef[1] / np.sqrt(fit.cov[1, 1]))
        assert 0.0 <= result.p <= 1.0

    def test_zero_contrast_is_degenerate(self, fit):
        (result,) = wald_contrasts(fit, [("zero", np.zeros(2))])
        assert result.degenerate
        assert np.isnan(result.p)

    def test_length_mismatch(self, fit):
        with pytest.raises(DimensionMismatch):
            wald_contrasts(fit, [("bad", np.ones(3))])

class TestBenjaminiHochberg:
    def test_adjusted_values(self):
        adjusted = bh_adjust([0.01, 0.04, 0.03, 0.2])
        np.testing.assert_allclose(adjusted, [0.04, 0.04 * 4 / 3, 0.04 * 4 / 3, 0.2])

    def test_empty(self):
        assert bh_adjust([]).size == 0

    def test_out_of_range(self):
        with pytest.raises(OutOfRange):
            bh_adjust([0.2, 1.5])

class TestPipeline:
    def test_end_to_end(self, example_tree, inference_data):
        report = run_fission_inference(inference_data, example_tree, 0.9, seed=1, folds=3, grid=SMALL_GRID)
        G = report.partition.n_groups
        assert report.partition.p == 7
        assert len(report.group_names) == G
        assert len(report.contrasts) == len(report.p_bh) == G
        assert all(0.0 <= c.p <= 1.0 for c in report.contrasts if not c.degenerate)

    def test_is_reproducible(self, example_tree, inference_data):
        one = run_fission_inference(inference_data, example_tree, seed=2, folds=3, grid=SMALL_GRID)
        two = run_fission_inference(inference_data, example_tree, seed=2, folds=3, grid=SMALL_GRID)
        assert one.group_names == two.group_names
        np.testing.assert_array_equal(one.fit.coef, two.fit.coef)

    def test_focal_contrasts(self, example_tree, inference_data):
        report = run_fission_inference(
            inference_data, example_tree, seed=1, folds=3, grid=SMALL_GRID, focal="x0"
        )
        assert len(report.contrasts) == report.partition.n_groups - 1
        assert all("-" in c.name for c in report.contrasts)

    def test_supplied_partition_skips_selection(self, example_tree, inference_data):
        partition = partition_from_labels([0, 1, 1, 2, 2, 3, 3])
        report = run_fission_inference(inference_data, example_tree, seed=1, focal="x0", partition=partition)
        assert report.partition is partition
        assert np.isnan(report.selected_lambda)
        assert [c.name for c in report.contrasts] == ["x0-g1", "x0-g2", "x0-g3"]

    def test_supplied_partition_width(self, example_tree, inference_data):
        with pytest.raises(DimensionMismatch):
            run_fission_inference(inference_data, example_tree, partition=partition_from_labels([0, 1, 1]))

    def test_unknown_focal(self, example_tree, inference_data):
        with pytest.raises(InputError):
            run_fission_inference(inference_data, example_tree, seed=1, folds=3, grid=SMALL_GRID, focal="nope")

    def test_rare_selection(self, example_tree, inference_data):
        report = run_fission_inference(
            inference_data, example_tree, seed=1, folds=3, grid=SMALL_GRID, method="rare"
        )
        assert report.partition.p == 7

    def test_unknown_method(self, example_tree, inference_data):
        with pytest.raises(InputError):
            run_fission_inference(inference_data, example_tree, seed=1, folds=3, grid=SMALL_GRID, method="magic")

    def test_continuous_response_rejected(self, example_tree, gaussian_data):
        with pytest.raises(NonBinaryResponse):
            run_fission_inference(gaussian_data, example_tree)

class TestNullCalibration:
    def test_small_run(self):
        report = null_calibration(n=120, p=8, K=2, reps=2, seed=1, threads=1, folds=3)
        assert report.reps == 2
        assert 0 <= report.failed_reps <= 2
        if report.n_contrasts:
            assert 0.0 <= report.wald_size <= 1.0
            assert 0.0 <= report.bh_fdp <= 1.0

    def test_focal_mode_tests_every_other_group(self):
        report = null_calibration(n=200, p=12, K=4, reps=3, seed=1, threads=1, focal=True)
        assert report.focal
        assert report.n_contrasts == 3 * (report.reps - report.failed_reps)
