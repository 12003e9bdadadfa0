import numpy as np
import pytest

from dtmp.optim import AdamState, adam_step, clip_grad_norm


def test_zero_gradient_is_fixed_point():
    params = {"w": np.array([1.5, -2.0])}
    state = AdamState(learning_rate=0.1)
    adam_step(params, {"w": np.zeros(2)}, state)
    np.testing.assert_array_equal(params["w"], [1.5, -2.0])
    assert state.t == 1


@pytest.mark.parametrize("g", [3.7, -0.02, 1e3])
def test_first_step_closed_form(g):
    # m_hat = g, v_hat = g^2  ->  step = lr * g / (|g| + eps)
    lr, eps = 0.01, 1e-8
    params = {"w": np.array([0.0])}
    adam_step(params, {"w": np.array([g])}, AdamState(learning_rate=lr, epsilon=eps))
    expected = -lr * g / (abs(g) + eps)
    np.testing.assert_allclose(params["w"], [expected], rtol=1e-12)
    np.testing.assert_allclose(params["w"], [-lr * np.sign(g)], rtol=1e-5)


def test_converges_on_quadratic():
    params = {"w": np.array([0.0])}
    state = AdamState(learning_rate=0.1)
    for _ in range(200):
        adam_step(params, {"w": 2 * (params["w"] - 3.0)}, state)
    assert abs(params["w"][0] - 3.0) < 0.05
    assert state.t == 200


def test_missing_gradient():
    with pytest.raises(KeyError, match="b"):
        adam_step({"a": np.zeros(1), "b": np.zeros(1)}, {"a": np.zeros(1)}, AdamState())


def test_moment_shapes_follow_parameters():
    params = {"a": np.zeros((2, 3)), "b": np.zeros(4)}
    state = AdamState()
    adam_step(params, {"a": np.ones((2, 3)), "b": np.ones(4)}, state)
    assert state.m["a"].shape == (2, 3) and state.v["b"].shape == (4,)


def test_defaults():
    s = AdamState()
    assert (s.learning_rate, s.beta1, s.beta2, s.epsilon) == (0.003, 0.9, 0.999, 1e-8)


def test_clip_grad_norm():
    grads = {"a": np.array([3.0]), "b": np.array([4.0])}
    assert clip_grad_norm(grads, 1.0) == pytest.approx(5.0)
    total = np.sqrt(grads["a"] ** 2 + grads["b"] ** 2)
    np.testing.assert_allclose(total, [1.0], rtol=1e-9)
    small = {"a": np.array([0.1])}
    clip_grad_norm(small, 1.0)
    np.testing.assert_array_equal(small["a"], [0.1])
