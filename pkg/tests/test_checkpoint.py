import json

import numpy as np
import pytest

from alen.exceptions import ParseError
from alen.nn import (Adam, Network, batch_norm, build_feature_extractor,
                     dense, elu, load_network, save_network)


def test_round_trip_exact(tmp_path):
    rng = np.random.default_rng(0)
    net = build_feature_extractor(5, 8, 4, rng)
    net.train().forward(rng.standard_normal((16, 5)))
    net.backward(rng.standard_normal((16, 4)))
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded, opt = load_network(path)
    assert opt is None
    for name in net.params:
        np.testing.assert_array_equal(loaded.params[name], net.params[name])
    for name in net.buffers:
        np.testing.assert_array_equal(loaded.buffers[name], net.buffers[name])
    x = rng.standard_normal((3, 5))
    np.testing.assert_array_equal(loaded.eval().forward(x),
                                  net.eval().forward(x))


def test_round_trip_with_optimizer(tmp_path):
    rng = np.random.default_rng(1)
    net = Network([dense(3, 4), elu(4), dense(4, 2)], rng)
    opt = Adam(lr=0.002)
    net.train().forward(rng.standard_normal((8, 3)))
    grads, _ = net.backward(rng.standard_normal((8, 2)))
    opt.compute_deltas(grads)
    path = tmp_path / "net.json"
    save_network(net, path, optimizer=opt)
    _, restored = load_network(path)
    assert restored.step_count == 1
    assert restored.lr == 0.002
    for name in opt.m:
        np.testing.assert_array_equal(restored.m[name], opt.m[name])


def test_format_version_check(tmp_path):
    rng = np.random.default_rng(2)
    net = Network([dense(2, 2)], rng)
    path = tmp_path / "net.json"
    save_network(net, path)
    doc = json.loads(path.read_text())
    doc["format_version"] = 99
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_network(path)


def test_missing_and_extra_params(tmp_path):
    rng = np.random.default_rng(3)
    net = Network([dense(2, 3), batch_norm(3)], rng)
    path = tmp_path / "net.json"
    save_network(net, path)
    doc = json.loads(path.read_text())
    removed = doc["params"].pop("layer0.bias")
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_network(path)
    doc["params"]["layer0.bias"] = removed
    doc["params"]["layer9.weight"] = [0.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_network(path)


def test_wrong_size_param(tmp_path):
    rng = np.random.default_rng(4)
    net = Network([dense(2, 2)], rng)
    path = tmp_path / "net.json"
    save_network(net, path)
    doc = json.loads(path.read_text())
    doc["params"]["layer0.bias"] = [0.0, 0.0, 0.0]
    path.write_text(json.dumps(doc))
    with pytest.raises(ParseError):
        load_network(path)


def test_values_survive_full_float_precision(tmp_path):
    rng = np.random.default_rng(5)
    net = Network([dense(4, 4)], rng)
    net.params["layer0.weight"][0, 0] = 1.0 / 3.0
    path = tmp_path / "net.json"
    save_network(net, path)
    loaded, _ = load_network(path)
    assert loaded.params["layer0.weight"][0, 0] == 1.0 / 3.0
