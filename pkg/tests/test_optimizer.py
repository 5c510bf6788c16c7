"""Tests for the Adam update."""

import numpy as np
import pytest

from acedg.services.optimizer_service import AdamState, OptimizerError, adam_step
from acedg.utils.tensor import parameter


class TestAdamStep:
    """Test bias-corrected Adam steps."""

    def test_zero_gradient_keeps_parameters(self):
        """Zero gradients leave parameters unchanged."""
        w = parameter([1.0, -2.0, 3.0])
        state = AdamState.for_parameters([w])
        adam_step(state, [w], [np.zeros(3)], learning_rate=0.1)
        assert w.values.tolist() == [1.0, -2.0, 3.0]
        assert state.step == 1

    def test_first_step_magnitude(self):
        """The first step moves each entry by about lr * sign(g)."""
        w = parameter([0.0, 0.0])
        g = np.array([0.3, -2.0])
        adam_step(AdamState.for_parameters([w]), [w], [g], learning_rate=0.01)
        expected = -0.01 * g / (np.abs(g) + 1e-8)
        assert np.allclose(w.values, expected, rtol=1e-6, atol=0)

    def test_uses_parameter_gradients(self):
        """Without explicit gradients each parameter's grad is used."""
        w = parameter([1.0])
        w.grad = np.array([0.5])
        adam_step(AdamState.for_parameters([w]), [w], None, learning_rate=0.1)
        assert w.values[0] == pytest.approx(0.9, rel=1e-6)

    def test_deterministic(self):
        """Identical inputs give bitwise-identical trajectories."""
        grads = [np.array([0.1, -0.4]), np.array([0.2, 0.3]), np.array([-0.5, 0.0])]
        results = []
        for _ in range(2):
            w = parameter([1.0, 1.0])
            state = AdamState.for_parameters([w])
            for g in grads:
                adam_step(state, [w], [g], learning_rate=0.05)
            results.append(w.values.copy())
        assert np.array_equal(results[0], results[1])

    def test_descends_quadratic(self):
        """Repeated steps on a quadratic move towards its minimum."""
        w = parameter([4.0, -3.0])
        state = AdamState.for_parameters([w])
        for _ in range(500):
            adam_step(state, [w], [2 * w.values.copy()], learning_rate=0.05)
        assert np.abs(w.values).max() < 0.5

    def test_non_finite_gradient(self):
        """A NaN gradient raises OptimizerError and leaves parameters alone."""
        w = parameter([1.0, 2.0])
        state = AdamState.for_parameters([w])
        with pytest.raises(OptimizerError):
            adam_step(state, [w], [np.array([np.nan, 0.0])], learning_rate=0.1)
        assert w.values.tolist() == [1.0, 2.0]
        assert state.step == 0

    def test_shape_mismatch(self):
        """A gradient of the wrong shape raises ValueError."""
        w = parameter([1.0, 2.0])
        with pytest.raises(ValueError):
            adam_step(AdamState.for_parameters([w]), [w], [np.zeros(3)], learning_rate=0.1)
