import numpy as np
import pytest

from alen.nn import Adam, adam_step, apply_signed_update


def test_first_step_hand_computed():
    # single scalar parameter, gradient g: after one step
    # m = (1-b1) g, v = (1-b2) g^2, m_hat = g, v_hat = g^2
    # delta = -lr * g / (|g| + eps)
    opt = Adam(lr=0.01)
    g = np.array([3.0])
    deltas = opt.compute_deltas({"p": g})
    expected = -0.01 * 3.0 / (3.0 + 1e-8)
    np.testing.assert_allclose(deltas["p"], expected, rtol=1e-12)
    assert opt.step_count == 1


def test_two_steps_match_manual_recurrence():
    lr, b1, b2, eps = 1e-3, 0.9, 0.999, 1e-8
    opt = Adam()
    g1, g2 = np.array([0.5, -2.0]), np.array([1.5, 0.25])
    d1 = opt.compute_deltas({"p": g1})
    d2 = opt.compute_deltas({"p": g2})
    m = np.zeros(2)
    v = np.zeros(2)
    for t, g in ((1, g1), (2, g2)):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mh = m / (1 - b1 ** t)
        vh = v / (1 - b2 ** t)
        delta = -lr * mh / (np.sqrt(vh) + eps)
        if t == 1:
            np.testing.assert_allclose(d1["p"], delta, rtol=1e-12)
    np.testing.assert_allclose(d2["p"], delta, rtol=1e-12)


def test_adam_step_applies_deltas():
    opt = Adam(lr=0.1)
    params = {"p": np.array([1.0, 1.0])}
    grads = {"p": np.array([1.0, -1.0])}
    before = params["p"].copy()
    adam_step(params, grads, opt)
    moved = params["p"] - before
    assert moved[0] < 0 < moved[1]


def test_state_dict_round_trip():
    opt = Adam(lr=0.05)
    rng = np.random.default_rng(0)
    for _ in range(3):
        opt.compute_deltas({"a": rng.standard_normal(4),
                            "b": rng.standard_normal((2, 2))})
    clone = Adam.from_state_dict(opt.state_dict(),
                                 shapes={"a": (4,), "b": (2, 2)})
    g = {"a": rng.standard_normal(4), "b": rng.standard_normal((2, 2))}
    d1 = opt.compute_deltas({k: v.copy() for k, v in g.items()})
    d2 = clone.compute_deltas({k: v.copy() for k, v in g.items()})
    for k in g:
        np.testing.assert_array_equal(d1[k], d2[k])
    assert clone.step_count == opt.step_count


def test_apply_signed_update_sign_and_subset():
    params = {"a": np.zeros(2), "b": np.zeros(2)}
    deltas = {"a": np.array([1.0, -1.0]), "c": np.array([5.0, 5.0])}
    apply_signed_update(params, deltas, -2.0)
    np.testing.assert_array_equal(params["a"], [-2.0, 2.0])
    np.testing.assert_array_equal(params["b"], [0.0, 0.0])


def test_moments_per_parameter_name():
    opt = Adam()
    opt.compute_deltas({"a": np.array([1.0])})
    d = opt.compute_deltas({"a": np.array([0.0]), "b": np.array([1.0])})
    # "a" still moves on its first-step momentum; "b" starts fresh
    assert d["a"][0] < 0
    assert d["b"][0] < 0
