import numpy as np
import pytest

from alen.exceptions import NumericError, ShapeError, StateError
from alen.nn import (LayerKind, LayerSpec, Network, accumulate_grads,
                     batch_norm, dense, elu, grad_reverse)


def small_net(rng):
    return Network([dense(3, 4), elu(4), batch_norm(4), dense(4, 2)], rng)


def test_layer_spec_validation():
    with pytest.raises(ShapeError):
        LayerSpec(LayerKind.DENSE, 0, 4)
    with pytest.raises(ShapeError):
        elu(0)
    with pytest.raises(ShapeError):
        LayerSpec(LayerKind.ELU, 3, 5)  # non-dense layers keep their width


def test_chain_validation():
    rng = np.random.default_rng(0)
    with pytest.raises(ShapeError):
        Network([dense(3, 4), dense(5, 2)], rng)


def test_dense_init_bounds():
    rng = np.random.default_rng(1)
    net = Network([dense(20, 30)], rng)
    w = net.params["layer0.weight"]
    limit = np.sqrt(6.0 / (20 + 30))
    assert np.all(np.abs(w) <= limit)
    assert np.all(net.params["layer0.bias"] == 0.0)
    assert w.dtype == np.float64


def test_forward_shapes_and_dims():
    rng = np.random.default_rng(2)
    net = small_net(rng)
    assert net.in_dim == 3 and net.out_dim == 2
    out = net.forward(rng.standard_normal((7, 3)))
    assert out.shape == (7, 2)
    with pytest.raises(ShapeError):
        net.forward(rng.standard_normal((7, 5)))


def test_elu_matches_definition():
    rng = np.random.default_rng(3)
    net = Network([elu(4)], rng)
    x = np.array([[-2.0, -0.5, 0.0, 1.5]])
    out = net.forward(x)
    expected = np.where(x > 0, x, np.exp(np.minimum(x, 0)) - 1.0)
    np.testing.assert_allclose(out, expected, rtol=0, atol=1e-15)


def test_batchnorm_train_normalizes_batch():
    rng = np.random.default_rng(4)
    net = Network([batch_norm(3)], rng)
    x = rng.standard_normal((64, 3)) * 5.0 + 2.0
    out = net.train().forward(x)
    np.testing.assert_allclose(out.mean(axis=0), 0.0, atol=1e-12)
    np.testing.assert_allclose(out.var(axis=0), 1.0, rtol=1e-6)


def test_batchnorm_running_stats_update():
    rng = np.random.default_rng(5)
    net = Network([batch_norm(2)], rng)
    x = rng.standard_normal((32, 2)) + 3.0
    net.train().forward(x)
    rm = net.buffers["layer0.running_mean"]
    rv = net.buffers["layer0.running_var"]
    # one update from (0, 1) with momentum 0.1
    np.testing.assert_allclose(rm, 0.1 * x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(rv, 0.9 + 0.1 * x.var(axis=0), rtol=1e-12)


def test_batchnorm_eval_uses_running_stats():
    rng = np.random.default_rng(6)
    net = Network([batch_norm(2)], rng)
    for _ in range(50):
        net.train().forward(rng.standard_normal((32, 2)) * 2.0 + 1.0)
    net.eval()
    x = rng.standard_normal((8, 2))
    out1 = net.forward(x)
    out2 = net.forward(x)
    np.testing.assert_array_equal(out1, out2)
    rm = net.buffers["layer0.running_mean"]
    rv = net.buffers["layer0.running_var"]
    expected = (x - rm) / np.sqrt(rv + 1e-5)
    np.testing.assert_allclose(out1, expected, rtol=1e-12)


def test_grad_reverse_forward_identity_backward_negation():
    rng = np.random.default_rng(7)
    net = Network([grad_reverse(3, 2.0)], rng)
    x = rng.standard_normal((5, 3))
    out = net.train().forward(x)
    np.testing.assert_array_equal(out, x)
    upstream = rng.standard_normal((5, 3))
    _, input_grad = net.backward(upstream)
    np.testing.assert_array_equal(input_grad, -2.0 * upstream)


def test_backward_requires_forward():
    rng = np.random.default_rng(8)
    net = small_net(rng)
    with pytest.raises(StateError):
        net.backward(np.ones((2, 2)))
    net.train().forward(rng.standard_normal((2, 3)))
    net.backward(np.ones((2, 2)))
    with pytest.raises(StateError):
        net.backward(np.ones((2, 2)))  # cache consumed


def test_nonfinite_input_raises():
    rng = np.random.default_rng(9)
    net = small_net(rng)
    x = np.ones((2, 3))
    x[0, 0] = np.nan
    with pytest.raises(NumericError):
        net.forward(x)


def test_copy_is_independent():
    rng = np.random.default_rng(10)
    net = small_net(rng)
    net.train().forward(rng.standard_normal((4, 3)))
    clone = net.copy()
    clone.params["layer0.weight"][:] = 0.0
    assert not np.all(net.params["layer0.weight"] == 0.0)
    clone.buffers["layer2.running_mean"][:] = 9.0
    assert not np.all(net.buffers["layer2.running_mean"] == 9.0)


def test_backward_grads_cover_all_params():
    rng = np.random.default_rng(11)
    net = small_net(rng)
    net.train().forward(rng.standard_normal((6, 3)))
    grads, input_grad = net.backward(rng.standard_normal((6, 2)))
    assert set(grads) == set(net.params)
    assert input_grad.shape == (6, 3)
    for name, g in grads.items():
        assert g.shape == net.params[name].shape


def test_accumulate_grads_adds_in_place():
    a = {"w": np.array([1.0, 2.0])}
    b = {"w": np.array([0.5, 0.5])}
    accumulate_grads(a, b)
    np.testing.assert_array_equal(a["w"], [1.5, 2.5])


def test_train_eval_flags():
    rng = np.random.default_rng(12)
    net = small_net(rng)
    assert net.train().training is True
    assert net.eval().training is False
