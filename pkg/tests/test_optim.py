import numpy as np

from cadence.optim import AdamState, adam_step
import pytest


def test_zero_grads_fresh_state_leaves_params_unchanged():
    params = {"w": np.array([1.0, -2.0])}
    grads = {"w": np.zeros(2)}
    state = AdamState.init(params)
    new, _ = adam_step(params, grads, state, lr=0.1)
    assert np.array_equal(new["w"], params["w"])


def test_moments_decay_under_zero_grads():
    params = {"w": np.zeros(2)}
    state = AdamState(m={"w": np.ones(2)}, v={"w": np.ones(2)}, step=5)
    _, new_state = adam_step(params, {"w": np.zeros(2)}, state, lr=0.0)
    assert np.allclose(new_state.m["w"], 0.9)
    assert np.allclose(new_state.v["w"], 0.999)


def test_single_scalar_first_step_matches_hand_derivation():
    # From m=v=0: m_hat = g, v_hat = g^2, update = lr * g / (|g| + eps)
    g = 0.37
    lr, eps = 1e-2, 1e-8
    params = {"w": np.array(2.0)}
    state = AdamState.init(params)
    new, _ = adam_step(params, {"w": np.array(g)}, state, lr=lr, eps=eps)
    expected = 2.0 - lr * g / (abs(g) + eps)
    assert abs(float(new["w"]) - expected) < 1e-15


def test_quadratic_converges_toward_zero():
    params = {"x": np.array(1.0)}
    state = AdamState.init(params)
    for _ in range(300):
        grads = {"x": 2.0 * params["x"]}
        params, state = adam_step(params, grads, state, lr=0.05)
    assert abs(float(params["x"])) < 1e-2


def test_weight_decay_is_decoupled():
    params = {"w": np.array(1.0)}
    state = AdamState.init(params)
    new, _ = adam_step(params, {"w": np.array(0.0)}, state, lr=0.1, weight_decay=0.5)
    assert abs(float(new["w"]) - (1.0 - 0.1 * 0.5)) < 1e-15


def test_shape_mismatch_raises():
    params = {"w": np.zeros(3)}
    state = AdamState.init(params)
    with pytest.raises(ValueError):
        adam_step(params, {"w": np.zeros(4)}, state, lr=0.1)
