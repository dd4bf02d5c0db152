"""Tests pour l'optimiseur Adam."""

import numpy as np
import pytest

from autodiff import Tensor
from errors import DimensionError, NonFiniteGradientError
from optim import AdamState, adam_step


def _params():
    return {
        "w": Tensor(np.array([[1.0, -2.0]]), requires_grad=True),
        "b": Tensor(np.array([[0.5]]), requires_grad=True),
    }


class TestAdamStep:
    """Tests d'un pas d'Adam."""

    def test_first_step_moves_by_lr_times_sign(self):
        """Au premier pas, m̂/√v̂ = signe du gradient."""
        params = _params()
        state = AdamState(lr=0.1)
        adam_step(params, {"w": np.array([[3.0, -0.2]]), "b": np.array([[1e-3]])}, state)
        np.testing.assert_allclose(params["w"].data, [[0.9, -1.9]], rtol=1e-6)
        np.testing.assert_allclose(params["b"].data, [[0.4]], rtol=1e-4)
        assert state.step_count == 1

    def test_zero_lr_leaves_params_unchanged(self):
        params = _params()
        before = {k: v.data.copy() for k, v in params.items()}
        state = AdamState(lr=0.0)
        for _ in range(5):
            adam_step(params, {"w": np.ones((1, 2)), "b": np.ones((1, 1))}, state)
        for name, value in before.items():
            np.testing.assert_array_equal(params[name].data, value)

    def test_missing_gradient_counts_as_zero(self):
        params = _params()
        adam_step(params, {"w": np.ones((1, 2))}, AdamState(lr=0.1))
        np.testing.assert_array_equal(params["b"].data, [[0.5]])

    def test_non_finite_gradient_rejects_whole_step(self):
        """Aucun paramètre ni moment n'est modifié."""
        params = _params()
        state = AdamState(lr=0.1)
        with pytest.raises(NonFiniteGradientError) as exc:
            adam_step(params, {"w": np.ones((1, 2)), "b": np.array([[np.nan]])}, state)
        assert exc.value.parameter_name == "b"
        np.testing.assert_array_equal(params["w"].data, [[1.0, -2.0]])
        assert state.step_count == 0
        assert state.first_moment == {}

    def test_constant_gradient_step_bounded_by_lr(self, rng):
        """Gradient constant : m̂/√v̂ reste dans [−1, 1], chaque pas déplace de ≤ lr."""
        for _ in range(20):
            params = _params()
            state = AdamState(lr=0.05)
            grads = {
                "w": rng.normal(size=(1, 2)) * 10.0 ** rng.uniform(-4, 3),
                "b": rng.normal(size=(1, 1)) * 10.0 ** rng.uniform(-4, 3),
            }
            for _ in range(50):
                before = {k: v.data.copy() for k, v in params.items()}
                adam_step(params, grads, state)
                for name, value in before.items():
                    moved = np.abs(params[name].data - value)
                    assert np.all(moved <= state.lr * (1.0 + 1e-12))
            np.testing.assert_allclose(
                state.first_moment["w"] / (1.0 - state.beta1 ** state.step_count), grads["w"], rtol=1e-12,
            )

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            adam_step(_params(), {"w": np.ones((2, 1))}, AdamState())

    def test_converges_on_quadratic(self):
        """Minimise (w − 3)² en quelques centaines de pas."""
        w = Tensor(np.array([[0.0]]), requires_grad=True)
        state = AdamState(lr=0.05)
        for _ in range(2000):
            adam_step({"w": w}, {"w": 2.0 * (w.data - 3.0)}, state)
        assert w.data[0, 0] == pytest.approx(3.0, abs=5e-2)
