import copy

import numpy as np
import pytest

from nfmlab.optim import AdamState, adam_step


def _params():
    return {"w": np.array([1.0, -2.0]), "b": np.array([[0.5]])}


def test_zero_gradients_with_zero_moments_is_exact_noop():
    params = _params()
    grads = {k: np.zeros_like(v) for k, v in params.items()}
    new, _ = adam_step(params, grads, AdamState())
    for k in params:
        assert np.array_equal(new[k], params[k])


def test_single_step_hand_value():
    # g=1: m_hat = 1, v_hat = 1, update = lr / (1 + eps)
    new, state = adam_step({"w": np.array([1.0])}, {"w": np.array([1.0])}, AdamState(lr=1e-3))
    assert state.step == 1
    assert new["w"][0] == pytest.approx(1.0 - 1e-3 / (1.0 + 1e-8), abs=1e-15)


def test_descends_on_square():
    w = np.array([1.0])
    state = AdamState(lr=0.1)
    params = {"w": w}
    for _ in range(5):
        grads = {"w": 2.0 * params["w"]}  # analytic gradient of w^2
        params, state = adam_step(params, grads, state)
    assert params["w"][0] < 1.0


def test_deterministic_and_order_independent():
    params_a = {"a": np.ones(3), "b": np.full(2, 2.0)}
    params_b = {"b": np.full(2, 2.0), "a": np.ones(3)}  # different insertion order
    grads_a = {"a": np.full(3, 0.3), "b": np.full(2, -0.7)}
    grads_b = {"b": np.full(2, -0.7), "a": np.full(3, 0.3)}
    out_a, _ = adam_step(params_a, grads_a, AdamState())
    out_b, _ = adam_step(params_b, grads_b, AdamState())
    for k in out_a:
        assert np.array_equal(out_a[k], out_b[k])

    s1, s2 = AdamState(), AdamState()
    r1, _ = adam_step(_params(), {"w": np.ones(2), "b": np.ones((1, 1))}, s1)
    r2, _ = adam_step(_params(), {"w": np.ones(2), "b": np.ones((1, 1))}, s2)
    for k in r1:
        assert np.array_equal(r1[k], r2[k])


def test_moment_buffers_track_parameter_shapes():
    params = _params()
    grads = {k: np.ones_like(v) for k, v in params.items()}
    state = AdamState()
    adam_step(params, grads, state)
    for k, v in params.items():
        assert state.m[k].shape == v.shape
        assert state.v[k].shape == v.shape


def test_step_counter_increments():
    params = _params()
    grads = {k: np.ones_like(v) for k, v in params.items()}
    state = AdamState()
    for expected in (1, 2, 3):
        params, state = adam_step(params, grads, state)
        assert state.step == expected


def test_shape_and_name_mismatch_errors():
    with pytest.raises(ValueError):
        adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, AdamState())
    with pytest.raises(ValueError):
        adam_step({"w": np.ones(2)}, {"v": np.ones(2)}, AdamState())


def test_two_identical_calls_bit_identical():
    params = _params()
    grads = {"w": np.array([0.1, 0.2]), "b": np.array([[0.3]])}
    out1, _ = adam_step(copy.deepcopy(params), copy.deepcopy(grads), AdamState())
    out2, _ = adam_step(copy.deepcopy(params), copy.deepcopy(grads), AdamState())
    for k in out1:
        assert np.array_equal(out1[k], out2[k])
