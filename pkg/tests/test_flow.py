import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gsmflow import tensor as T
from gsmflow.checks import fd_logdet, gradient_check_passes
from gsmflow.errors import DimensionError, ParseError
from gsmflow.flow import (
    CouplingLayer, FlowModel, coupling_forward, coupling_inverse, flow_forward, flow_inverse,
    load_checkpoint, log_likelihood, randomize_parameters, save_checkpoint,
)
from gsmflow.tensor import Tensor

LOG_2PI = math.log(2 * math.pi)


def random_layer(d, c, seed, scale=0.5, hidden=16):
    rng = np.random.default_rng(seed)
    layer = CouplingLayer(d, c, hidden=hidden, rng=rng)
    for p in layer.parameters():
        p.data = rng.normal(0, scale / math.sqrt(max(p.rows, 2)), p.shape)
    return layer


def random_model(d, c, blocks, seed, scale=0.3, hidden=16):
    model = FlowModel(d, c, blocks, hidden=hidden, seed=seed)
    randomize_parameters(model, np.random.default_rng(seed + 1000), scale)
    return model


def test_zero_parameters_give_identity():
    layer = CouplingLayer(5, 3, hidden=8, rng=np.random.default_rng(0))
    for p in layer.parameters():
        p.data = np.zeros(p.shape)
    x = np.random.default_rng(1).normal(size=(7, 5))
    y, logdet = coupling_forward(layer, x, np.ones((7, 3)))
    np.testing.assert_array_equal(y.data, x)
    np.testing.assert_array_equal(logdet.data, np.zeros((7, 1)))


def test_default_init_is_identity_and_inverse_too():
    layer = CouplingLayer(6, 2, rng=np.random.default_rng(0))
    y = np.random.default_rng(1).normal(size=(3, 6))
    np.testing.assert_array_equal(coupling_inverse(layer, y, np.ones((3, 2))).data, y)


def test_coupling_logdet_matches_fd_jacobian():
    layer = random_layer(4, 3, seed=0, scale=1.0)
    rng = np.random.default_rng(5)
    for _ in range(3):
        x = rng.normal(size=(1, 4))
        cond = rng.normal(size=(1, 3))
        with T.no_grad():
            _, logdet = layer.forward(x, cond)
            brute = fd_logdet(lambda v: layer.forward(v.reshape(1, -1), cond)[0].data, x, step=1e-5)
        assert abs(logdet.item() - brute) <= 1e-4


def test_condition_reaches_output():
    layer = CouplingLayer(4, 2, hidden=4, rng=np.random.default_rng(0))
    for p in layer.parameters():
        p.data = np.zeros(p.shape)
    # one nonzero weight from condition slot 0 into hidden unit 0, then a path to the shift
    w = np.zeros(layer.shift_net.weights[0].shape)
    w[layer.split_point + 0, 0] = 1.0
    layer.shift_net.weights[0].data = w
    w2 = np.zeros(layer.shift_net.weights[1].shape)
    w2[0, 0] = 1.0
    layer.shift_net.weights[1].data = w2
    w3 = np.zeros(layer.shift_net.weights[2].shape)
    w3[0, 0] = 1.0
    layer.shift_net.weights[2].data = w3
    x = np.ones((1, 4))
    y_a, _ = layer.forward(x, [[0.0, 0.0]])
    y_b, _ = layer.forward(x, [[1.0, 0.0]])
    assert not np.array_equal(y_a.data, y_b.data)


def test_coupling_roundtrips():
    layer = random_layer(16, 5, seed=1, scale=1.0, hidden=32)
    rng = np.random.default_rng(2)
    x = rng.normal(size=(32, 16))
    cond = rng.normal(size=(32, 5))
    with T.no_grad():
        y, _ = layer.forward(x, cond)
        assert np.abs(layer.inverse(y, cond).data - x).max() <= 1e-8
        z = rng.normal(size=(32, 16))
        assert np.abs(layer.forward(layer.inverse(z, cond), cond)[0].data - z).max() <= 1e-8


def test_coupling_dimension_errors():
    layer = CouplingLayer(4, 2, rng=np.random.default_rng(0))
    with pytest.raises(DimensionError):
        layer.forward(np.zeros((3, 5)), np.zeros((3, 2)))
    with pytest.raises(DimensionError):
        layer.forward(np.zeros((3, 4)), np.zeros((2, 2)))
    with pytest.raises(DimensionError):
        layer.inverse(np.zeros((3, 4)), np.zeros((3, 3)))


def test_zero_block_model_is_identity():
    model = FlowModel(3, 2, n_blocks=0)
    x = np.random.default_rng(0).normal(size=(4, 3))
    out = flow_forward(model, x, np.zeros((4, 2)))
    np.testing.assert_array_equal(out.z.data, x)
    np.testing.assert_array_equal(out.logdet.data, np.zeros((4, 1)))
    np.testing.assert_array_equal(flow_inverse(model, x, np.zeros((4, 2))).data, x)


def test_identity_initialized_model_only_permutes():
    model = FlowModel(6, 2, n_blocks=4, seed=3)
    x = np.random.default_rng(0).normal(size=(5, 6))
    out = model.forward(x, np.ones((5, 2)))
    expected = x
    for perm, _ in model.blocks:
        expected = expected[:, perm.perm]
    np.testing.assert_array_equal(out.z.data, expected)
    np.testing.assert_array_equal(out.logdet.data, np.zeros((5, 1)))


def test_flow_logdet_matches_fd_jacobian():
    model = random_model(6, 3, 3, seed=4, scale=1.0)
    rng = np.random.default_rng(9)
    x = rng.normal(size=(1, 6))
    cond = rng.normal(size=(1, 3))
    with T.no_grad():
        logdet = model.forward(x, cond).logdet.item()
        brute = fd_logdet(lambda v: model.forward(v.reshape(1, -1), cond).z.data, x)
    assert abs(logdet - brute) <= 1e-3


def test_flow_roundtrip_64d_8_blocks():
    model = random_model(64, 10, 8, seed=5, hidden=32)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(16, 64))
    cond = rng.normal(size=(16, 10))
    with T.no_grad():
        z = model.forward(x, cond).z
        assert np.abs(model.inverse(z, cond).data - x).max() <= 1e-6


def test_roundtrip_error_over_block_count():
    rng = np.random.default_rng(1)
    x = rng.normal(size=(8, 12))
    cond = rng.normal(size=(8, 4))
    errors = []
    with T.no_grad():
        for blocks in range(1, 9):
            model = random_model(12, 4, blocks, seed=blocks)
            errors.append(np.abs(model.inverse(model.forward(x, cond).z, cond).data - x).max())
    assert max(errors) <= 1e-6


def test_log_likelihood_standard_normal_values():
    model = FlowModel(2, 1, n_blocks=0)
    assert log_likelihood(model, [[0.0, 0.0]], [[0.0]]).item() == pytest.approx(-LOG_2PI, abs=1e-12)
    assert log_likelihood(model, [[1.0, 1.0]], [[0.0]]).item() == pytest.approx(-LOG_2PI - 1, abs=1e-12)
    assert -LOG_2PI == pytest.approx(-1.837877, abs=1e-6)


def test_constant_scale_layer_adds_its_log_scale():
    model = FlowModel(2, 1, n_blocks=1, seed=0)
    _, coupling = model.blocks[0]
    assert coupling.dim - coupling.split_point == 1
    bias = np.array([[coupling.clamp * math.atanh(0.5 / coupling.clamp)]])
    coupling.scale_net.biases[-1].data = bias
    x = np.array([[0.3, -0.2]])
    base = log_likelihood(FlowModel(2, 1, n_blocks=0), x, [[0.0]]).item()
    out = model.forward(x, [[0.0]])
    assert out.logdet.item() == pytest.approx(0.5, abs=1e-12)
    ll = log_likelihood(model, x, [[0.0]]).item()
    z = out.z.data
    assert ll == pytest.approx(-0.5 * (z ** 2).sum() - LOG_2PI + 0.5, abs=1e-12)
    assert ll != base


def test_condition_gradient_is_nonzero():
    model = random_model(8, 4, 3, seed=6)
    cond = Tensor(np.random.default_rng(0).normal(size=(5, 4)), requires_grad=True)
    x = np.random.default_rng(1).normal(size=(5, 8))
    T.sum(log_likelihood(model, x, cond)).backward()
    assert np.abs(cond.grad).max() > 0


def test_log_likelihood_parameter_gradients():
    from gsmflow.checks import numerical_gradient
    model = random_model(4, 2, 2, seed=7, hidden=5)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(3, 4))
    cond = rng.normal(size=(3, 2))
    loss = lambda: T.mean(log_likelihood(model, x, cond))  # noqa: E731
    params = model.parameters()
    loss().backward()
    for p, num in zip(params, numerical_gradient(loss, params)):
        assert gradient_check_passes(p.grad, num)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.5, 50.0), st.floats(0.1, 5.0), st.integers(0, 10_000))
def test_clamp_bounds_log_scale(weight_scale, clamp, seed):
    rng = np.random.default_rng(seed)
    layer = CouplingLayer(6, 3, hidden=8, clamp=clamp, rng=rng)
    for p in layer.parameters():
        p.data = rng.normal(0, weight_scale, p.shape)
    x = rng.normal(0, 10, size=(20, 6))
    with T.no_grad():
        s, _ = layer.scale_and_shift(T.take_cols(Tensor(x), slice(0, layer.split_point)),
                                     Tensor(rng.normal(size=(20, 3))))
    assert np.abs(s.data).max() <= clamp


def test_zero_condition_weights_makes_condition_irrelevant():
    model = random_model(6, 3, 2, seed=8)
    model.zero_condition_weights()
    x = np.random.default_rng(0).normal(size=(2, 6))
    a = model.forward(x, np.zeros((2, 3))).z.data
    b = model.forward(x, np.full((2, 3), 5.0)).z.data
    np.testing.assert_array_equal(a, b)


def test_checkpoint_roundtrip(tmp_path):
    model = random_model(10, 4, 3, seed=9, hidden=7)
    path = tmp_path / "m.gsmf"
    save_checkpoint(model, path)
    assert path.read_bytes()[:4] == b"GSMF"
    loaded = load_checkpoint(path)
    assert (loaded.dim, loaded.cond_dim, loaded.n_blocks, loaded.hidden) == (10, 4, 3, 7)
    for a, b in zip(model.parameters(), loaded.parameters()):
        np.testing.assert_array_equal(a.data, b.data)
    for (pa, _), (pb, _) in zip(model.blocks, loaded.blocks):
        np.testing.assert_array_equal(pa.perm, pb.perm)
    x = np.random.default_rng(0).normal(size=(3, 10))
    c = np.ones((3, 4))
    np.testing.assert_array_equal(model.forward(x, c).z.data, loaded.forward(x, c).z.data)
    save_checkpoint(loaded, tmp_path / "again.gsmf")
    assert (tmp_path / "again.gsmf").read_bytes() == path.read_bytes()


def test_checkpoint_rejects_corruption(tmp_path):
    model = FlowModel(4, 2, 1, hidden=3)
    path = tmp_path / "m.gsmf"
    save_checkpoint(model, path)
    raw = path.read_bytes()
    (tmp_path / "bad.gsmf").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParseError, match="magic"):
        load_checkpoint(tmp_path / "bad.gsmf")
    (tmp_path / "short.gsmf").write_bytes(raw[:-8])
    with pytest.raises(ParseError):
        load_checkpoint(tmp_path / "short.gsmf")
