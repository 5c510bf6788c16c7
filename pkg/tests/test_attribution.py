"""Tests for ACE estimation."""

import numpy as np
import pytest

from acedg.models.network import ClassifierHead
from acedg.schemas.attribution import AceEstimatorConfig, EstimatorMode
from acedg.services.attribution_service import (
    AceDiagnostics,
    EmptyBatchError,
    EstimatorError,
    FeatureBounds,
    ace_matrix,
    ace_profile,
    ace_value,
    ace_vector,
    baseline_expectation,
    compute_bounds,
    interventional_expectation,
)
from acedg.utils.tensor import Tape, mul, parameter, tensor, total
from tests.conftest import finite_difference, relative_error

ANALYTIC = AceEstimatorConfig(mode=EstimatorMode.ANALYTIC_AFFINE)
UNIT_SQUARE = FeatureBounds(low=np.zeros(2), high=np.ones(2))


def affine_example() -> ClassifierHead:
    return ClassifierHead.from_arrays([[[2.0, -1.0]]], [[0.5]])


def random_affine_head(rng: np.random.Generator, n: int, classes: int) -> ClassifierHead:
    return ClassifierHead.from_arrays([rng.standard_normal((classes, n))], [rng.standard_normal(classes)])


def random_relu_head(rng: np.random.Generator, n: int, hidden: int = 6, classes: int = 2) -> ClassifierHead:
    return ClassifierHead.from_arrays(
        [rng.standard_normal((hidden, n)), rng.standard_normal((classes, hidden))],
        [rng.standard_normal(hidden) * 0.5, rng.standard_normal(classes)],
    )


def random_bounds(rng: np.random.Generator, n: int) -> FeatureBounds:
    low = rng.uniform(-2.0, 0.0, n)
    return FeatureBounds(low=low, high=low + rng.uniform(0.5, 3.0, n))


class TestComputeBounds:
    """Test intervention bounds from a batch of latents."""

    def test_min_max(self):
        """Column [0,1,2] with epsilon 0 gives [0, 2]."""
        bounds = compute_bounds(np.array([[0.0], [1.0], [2.0]]), 0.0)
        assert bounds.low.tolist() == [0.0]
        assert bounds.high.tolist() == [2.0]

    def test_constant_column_widened(self):
        """Constant column 5 with epsilon 0.01 gives [4.99, 5.01]."""
        bounds = compute_bounds(np.full((4, 1), 5.0), 0.01)
        assert bounds.low[0] == pytest.approx(4.99)
        assert bounds.high[0] == pytest.approx(5.01)

    def test_single_sample(self):
        """One sample gives epsilon-widened points."""
        bounds = compute_bounds(np.array([[1.0, -3.0]]), 0.1)
        assert np.allclose(bounds.low, [0.9, -3.1])
        assert np.allclose(bounds.high, [1.1, -2.9])

    def test_empty_batch(self):
        """An empty batch raises EmptyBatchError."""
        with pytest.raises(EmptyBatchError):
            compute_bounds(np.zeros((0, 3)), 0.01)

    def test_low_above_high_rejected(self):
        """Bounds require low <= high."""
        with pytest.raises(ValueError):
            FeatureBounds(low=np.array([1.0]), high=np.array([0.0]))


class TestExpectations:
    """Test interventional and baseline expectations."""

    def test_affine_interventional(self):
        """do(z^0 = 1) on W=[[2,-1]], b=0.5 over [0,1]^2 gives 2.0."""
        value = interventional_expectation(affine_example(), 0, 1.0, UNIT_SQUARE, ANALYTIC, 0)
        assert value.item() == pytest.approx(2.0, abs=1e-12)

    def test_affine_baseline(self):
        """The baseline for j=1 is 1.0."""
        value = baseline_expectation(affine_example(), 1, UNIT_SQUARE, ANALYTIC, 0)
        assert value.item() == pytest.approx(1.0, abs=1e-12)

    def test_mc_interventional_matches_analytic(self):
        """Monte-Carlo agrees with the closed form within 5 standard errors."""
        k = 20000
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=k, seed=5)
        value = interventional_expectation(affine_example(), 0, 1.0, UNIT_SQUARE, cfg, 0)
        sigma = 1.0 / np.sqrt(12.0)  # std of -z^1 with z^1 ~ U(0, 1)
        assert abs(value.item() - 2.0) <= 5 * sigma / np.sqrt(k)

    def test_quadrature_affine_exact(self):
        """The midpoint rule is exact for affine heads."""
        cfg = AceEstimatorConfig(mode=EstimatorMode.QUADRATURE, grid_points=16)
        value = interventional_expectation(affine_example(), 0, 1.0, UNIT_SQUARE, cfg, 0)
        assert value.item() == pytest.approx(2.0, abs=1e-12)

    def test_mc_matches_quadrature_on_relu_head(self, rng):
        """On a 2-input ReLU head, Monte-Carlo and quadrature agree within 5 standard errors."""
        head = random_relu_head(rng, 2)
        bounds = random_bounds(rng, 2)
        k = 20000
        mc = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=k, seed=9)
        quad = AceEstimatorConfig(mode=EstimatorMode.QUADRATURE, grid_points=401)

        alpha = float(bounds.midpoint[0] + 0.3 * bounds.width[0])
        estimate = interventional_expectation(head, 0, alpha, bounds, mc, 1).item()
        reference = interventional_expectation(head, 0, alpha, bounds, quad, 1).item()

        draws = np.random.default_rng(9).random((k, 2)) * bounds.width + bounds.low
        draws[:, 0] = alpha
        sigma = head(tensor(draws)).values[:, 1].std()
        assert abs(estimate - reference) <= 5 * sigma / np.sqrt(k) + 1e-4

    def test_baseline_matches_quadrature_on_relu_head(self, rng):
        """The Monte-Carlo baseline agrees with quadrature on a nonlinear head."""
        head = random_relu_head(rng, 2)
        bounds = random_bounds(rng, 2)
        k = 20000
        mc = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=k, seed=4)
        quad = AceEstimatorConfig(mode=EstimatorMode.QUADRATURE, grid_points=201)
        estimate = baseline_expectation(head, 1, bounds, mc, 0).item()
        reference = baseline_expectation(head, 1, bounds, quad, 0).item()
        sigma = head(tensor(np.random.default_rng(4).random((k, 2)) * bounds.width + bounds.low)).values[:, 0].std()
        assert abs(estimate - reference) <= 5 * sigma / np.sqrt(k) + 1e-4

    def test_point_mass_interval(self, rng):
        """With low=high=c the baseline equals the interventional expectation at c."""
        head = random_relu_head(rng, 2)
        bounds = FeatureBounds(low=np.array([0.7, -1.0]), high=np.array([0.7, 1.0]))
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=500, seed=2)
        base = baseline_expectation(head, 0, bounds, cfg, 0).item()
        inter = interventional_expectation(head, 0, 0.7, bounds, cfg, 0).item()
        assert base == pytest.approx(inter, abs=1e-12)


class TestAceValue:
    """Test scalar ACE values."""

    def test_affine_closed_form(self):
        """Second coordinate, alpha=1: w = -1 times (1 - 0.5) gives -0.5."""
        value = ace_value(affine_example(), 1, 1.0, UNIT_SQUARE, ANALYTIC, 0)
        assert value.item() == pytest.approx(-0.5, abs=1e-12)

    def test_affine_first_coordinate(self):
        """First coordinate, alpha=1: interventional 2.0 minus baseline 1.0 gives 1.0."""
        value = ace_value(affine_example(), 0, 1.0, UNIT_SQUARE, ANALYTIC, 0)
        assert value.item() == pytest.approx(1.0, abs=1e-12)

    def test_midpoint_is_zero(self):
        """alpha at the interval midpoint gives ACE 0."""
        value = ace_value(affine_example(), 0, 0.5, UNIT_SQUARE, ANALYTIC, 0)
        assert value.item() == 0.0

    def test_output_shift_invariance(self, rng):
        """Adding a constant to the target output leaves the ACE unchanged."""
        head = random_relu_head(rng, 3)
        bounds = random_bounds(rng, 3)
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=400, seed=1)
        before = ace_value(head, 2, 0.3, bounds, cfg, 1).item()
        head.params[-1].values[1] += 7.0
        after = ace_value(head, 2, 0.3, bounds, cfg, 1).item()
        assert after == pytest.approx(before, abs=1e-10)

    def test_analytic_requires_affine_head(self, rng):
        """The closed form is refused for heads with hidden layers."""
        with pytest.raises(EstimatorError):
            ace_value(random_relu_head(rng, 2), 0, 0.5, UNIT_SQUARE, ANALYTIC, 0)

    def test_quadrature_dimension_limit(self, rng):
        """Quadrature refuses more than four latent coordinates."""
        head = random_relu_head(rng, 5)
        with pytest.raises(EstimatorError):
            ace_value(head, 0, 0.0, random_bounds(rng, 5), AceEstimatorConfig(mode=EstimatorMode.QUADRATURE), 0)

    def test_target_class_out_of_range(self):
        """Target classes outside the head's outputs are refused."""
        with pytest.raises(EstimatorError):
            ace_value(affine_example(), 0, 0.5, UNIT_SQUARE, ANALYTIC, 1)

    def test_non_finite_alpha_rejected(self):
        """An infinite intervened value is rejected."""
        with pytest.raises(ValueError):
            ace_value(affine_example(), 0, float("inf"), UNIT_SQUARE, ANALYTIC, 0)

    def test_gradient_through_alpha(self, rng):
        """Monte-Carlo ACE is differentiable w.r.t. the intervened value."""
        head = random_relu_head(rng, 2)
        bounds = random_bounds(rng, 2)
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=300, seed=6)
        alpha = parameter(float(bounds.midpoint[0]))
        with Tape() as tape:
            tape.backward(ace_value(head, 0, alpha, bounds, cfg, 0))
        numeric = finite_difference(lambda: ace_value(head, 0, alpha, bounds, cfg, 0).item(), alpha, [()])
        assert relative_error(np.atleast_1d(alpha.grad), numeric) <= 1e-4


class TestAceProperties:
    """Property checks over many random heads."""

    def test_mc_matches_closed_form(self, rng):
        """Shared-draw Monte-Carlo matches w_j (alpha - mu_j) on random affine heads."""
        k = 5000
        within, coordinates = 0, 0
        for trial in range(20):
            n = int(rng.integers(1, 9))
            head = random_affine_head(rng, n, 3)
            bounds = random_bounds(rng, n)
            z = tensor(rng.uniform(bounds.low, bounds.high, size=(4, n)))
            targets = rng.integers(0, 3, size=4)
            cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=k, seed=trial)
            exact = ace_matrix(head, z, targets, bounds, ANALYTIC).values
            estimate = ace_matrix(head, z, targets, bounds, cfg).values
            w = head.params[0].values[targets]
            tolerance = 5 * np.abs(w) * bounds.width / np.sqrt(12 * k)
            within += int(np.count_nonzero(np.abs(estimate - exact) <= tolerance + 1e-12))
            coordinates += exact.size
        assert within / coordinates >= 0.99

    def test_zero_mean_law(self, rng):
        """The ACE averaged over the intervened range is zero."""
        for _ in range(5):
            n = int(rng.integers(1, 4))
            head = random_relu_head(rng, n)
            bounds = random_bounds(rng, n)
            cfg = AceEstimatorConfig(mode=EstimatorMode.QUADRATURE, grid_points=301, inner_grid_points=8)
            for j in range(n):
                grid = bounds.low[j] + (np.arange(301) + 0.5) / 301 * bounds.width[j]
                profile = ace_profile(head, j, grid, bounds, cfg, 0)
                assert abs(profile.mean()) <= 1e-3 * max(np.abs(profile).max(), 1e-9)

    def test_shift_invariance(self, rng):
        """Shifting bounds and alpha together leaves the ACE unchanged."""
        for trial in range(10):
            n = 3
            head = random_relu_head(rng, n)
            bounds = random_bounds(rng, n)
            shift = rng.uniform(-1, 1, n)
            shifted_bounds = FeatureBounds(low=bounds.low + shift, high=bounds.high + shift)
            # compensate inside the head so it sees the same inputs
            shifted_head = ClassifierHead.from_arrays(
                [head.params[0].values, head.params[2].values],
                [head.params[1].values - head.params[0].values @ shift, head.params[3].values],
            )
            cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=4000, seed=trial)
            alpha = float(bounds.midpoint[1] + 0.2)
            a = ace_value(head, 1, alpha, bounds, cfg, 0).item()
            b = ace_value(shifted_head, 1, alpha + shift[1], shifted_bounds, cfg, 0).item()
            assert b == pytest.approx(a, abs=1e-9)

    def test_scale_equivariance(self, rng):
        """Scaling the output layer by c scales the ACE by c."""
        for trial in range(10):
            head = random_relu_head(rng, 3)
            bounds = random_bounds(rng, 3)
            c = float(rng.uniform(0.5, 3.0))
            scaled = ClassifierHead.from_arrays(
                [head.params[0].values, c * head.params[2].values],
                [head.params[1].values, c * head.params[3].values],
            )
            cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=1000, seed=trial)
            a = ace_value(head, 0, 0.1, bounds, cfg, 1).item()
            b = ace_value(scaled, 0, 0.1, bounds, cfg, 1).item()
            assert b == pytest.approx(c * a, rel=1e-9, abs=1e-12)

    def test_analytic_scale_and_shift_exact(self, rng):
        """In closed form, shift invariance and scale equivariance hold up to rounding."""
        head = random_affine_head(rng, 4, 2)
        bounds = random_bounds(rng, 4)
        base = ace_value(head, 2, 0.4, bounds, ANALYTIC, 1).item()
        shifted = FeatureBounds(low=bounds.low + 1.0, high=bounds.high + 1.0)
        assert ace_value(head, 2, 1.4, shifted, ANALYTIC, 1).item() == pytest.approx(base, abs=1e-12)
        doubled = ClassifierHead.from_arrays([2 * head.params[0].values], [head.params[1].values])
        assert ace_value(doubled, 2, 0.4, bounds, ANALYTIC, 1).item() == pytest.approx(2 * base, abs=1e-12)

    def test_quadrature_agrees_with_closed_form(self, rng):
        """Quadrature profiles of affine heads equal the closed form."""
        head = random_affine_head(rng, 3, 2)
        bounds = random_bounds(rng, 3)
        alphas = np.linspace(bounds.low[1], bounds.high[1], 7)
        quad = ace_profile(head, 1, alphas, bounds, AceEstimatorConfig(mode=EstimatorMode.QUADRATURE, grid_points=6), 0)
        exact = ace_profile(head, 1, alphas, bounds, ANALYTIC, 0)
        assert np.allclose(quad, exact, atol=1e-10)


class TestAceVector:
    """Test per-sample ACE vectors and batched matrices."""

    def test_affine_entries(self, rng):
        """Entries equal w_{y,j} (z^j - mu_j)."""
        head = random_affine_head(rng, 4, 3)
        bounds = random_bounds(rng, 4)
        z = rng.uniform(bounds.low, bounds.high)
        vec = ace_vector(head, tensor(z), 2, bounds, ANALYTIC, sample_id=17)
        assert len(vec) == 4
        assert vec.sample_id == 17
        assert np.allclose(vec.values.values, head.params[0].values[2] * (z - bounds.midpoint), atol=1e-12)

    def test_midpoint_vector_is_zero(self, rng):
        """A latent at the midpoint vector has a zero ACE vector."""
        head = random_affine_head(rng, 3, 2)
        bounds = random_bounds(rng, 3)
        vec = ace_vector(head, tensor(bounds.midpoint), 0, bounds, ANALYTIC)
        assert not vec.values.values.any()

    def test_matrix_rows_match_vectors(self, rng):
        """Each row of the batched matrix equals the single-sample vector."""
        head = random_relu_head(rng, 3)
        bounds = random_bounds(rng, 3)
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=64, seed=3)
        z = rng.uniform(bounds.low, bounds.high, size=(5, 3))
        targets = np.array([0, 1, 1, 0, 1])
        matrix = ace_matrix(head, tensor(z), targets, bounds, cfg).values
        for i in range(5):
            row = ace_vector(head, tensor(z[i]), int(targets[i]), bounds, cfg).values.values
            assert np.allclose(matrix[i], row, atol=1e-12)

    def test_matrix_rows_match_scalar_values(self, rng):
        """Matrix entries equal scalar ACE values for the same draws."""
        head = random_relu_head(rng, 2)
        bounds = random_bounds(rng, 2)
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=128, seed=8)
        z = rng.uniform(bounds.low, bounds.high, size=(2, 2))
        matrix = ace_matrix(head, tensor(z), np.array([1, 0]), bounds, cfg).values
        assert matrix[0, 1] == pytest.approx(ace_value(head, 1, float(z[0, 1]), bounds, cfg, 1).item(), abs=1e-12)

    def test_out_of_bounds_counted(self):
        """Latent values outside the bounds are counted, not clamped."""
        diagnostics = AceDiagnostics()
        z = tensor([[2.0, 0.5], [0.5, -1.0]])
        matrix = ace_matrix(affine_example(), z, np.array([0, 0]), UNIT_SQUARE, ANALYTIC, diagnostics)
        assert diagnostics.out_of_bounds == 2
        assert matrix.values[0, 0] == pytest.approx(2.0 * 1.5)

    def test_matrix_gradient(self, rng):
        """The Monte-Carlo ACE matrix is differentiable w.r.t. head parameters."""
        head = random_relu_head(rng, 2)
        bounds = random_bounds(rng, 2)
        cfg = AceEstimatorConfig(mode=EstimatorMode.MONTE_CARLO, mc_samples=50, seed=0)
        z = tensor(rng.uniform(bounds.low, bounds.high, size=(3, 2)))
        targets = np.array([0, 1, 0])
        weight = head.params[2]

        def loss():
            return total(ace_matrix(head, z, targets, bounds, cfg))

        with Tape() as tape:
            tape.backward(loss())
        indices = [(i, j) for i in range(weight.shape[0]) for j in range(weight.shape[1])]
        numeric = finite_difference(lambda: loss().item(), weight, indices)
        assert relative_error(weight.grad.ravel(), numeric) <= 1e-5

    @pytest.mark.parametrize("mode", [EstimatorMode.ANALYTIC_AFFINE, EstimatorMode.MONTE_CARLO])
    def test_gradient_wrt_latent(self, rng, mode):
        """Gradients of a weighted ACE vector flow back into the intervened latent."""
        n = 3
        if mode == EstimatorMode.ANALYTIC_AFFINE:
            head = random_affine_head(rng, n, 2)
        else:
            head = random_relu_head(rng, n)
        bounds = random_bounds(rng, n)
        cfg = AceEstimatorConfig(mode=mode, mc_samples=64, seed=3)
        z = parameter(rng.uniform(bounds.low, bounds.high))
        coeffs = tensor(rng.standard_normal(n))

        def loss():
            return total(mul(ace_vector(head, z, 1, bounds, cfg).values, coeffs))

        with Tape() as tape:
            tape.backward(loss())
        numeric = finite_difference(lambda: loss().item(), z, [(j,) for j in range(n)])
        assert relative_error(z.grad, numeric) <= 1e-5
