import numpy as np
import pytest

from qroute.qnet import Adam, Momentum, QNetwork, TargetNetwork, relu, sync_target


def naive_forward(net, x):
    """Loop-based forward pass, independent of the vectorized one."""
    h = list(map(float, x))
    for li, (w, b) in enumerate(zip(net.weights, net.biases)):
        out = []
        for i in range(w.shape[0]):
            s = float(b[i])
            for j in range(w.shape[1]):
                s += float(w[i, j]) * h[j]
            out.append(s if li == len(net.weights) - 1 else max(s, 0.0))
        h = out
    return h[0]


def finite_difference_grad(net, x, target, step=1e-5):
    grad = np.zeros_like(net.params)
    for k in range(net.params.size):
        old = net.params[k]
        net.params[k] = old + step
        up = net.loss(x, target)
        net.params[k] = old - step
        down = net.loss(x, target)
        net.params[k] = old
        grad[k] = (up - down) / (2 * step)
    return grad


def max_rel_error(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def test_default_shape_and_views():
    net = QNetwork.for_qubits(16, seed=0)
    assert net.layer_dims == (16, 32, 32, 32, 1)
    assert [w.shape for w in net.weights] == [(32, 16), (32, 32), (32, 32), (1, 32)]
    net.weights[0][0, 0] = 123.0
    assert 123.0 in net.params
    assert all(np.all(b == 0) for b in net.biases)


def test_init_bound():
    net = QNetwork((16, 32, 1), seed=1)
    assert np.abs(net.weights[0]).max() <= np.sqrt(6 / 48)


def test_relu():
    assert relu(np.array([-1.0, 2.0])).tolist() == [0.0, 2.0]


def test_zero_weights_output_is_bias():
    net = QNetwork((4, 3, 1), seed=0)
    net.params[:] = 0
    net.biases[-1][0] = 0.7
    for x in np.random.default_rng(0).normal(size=(5, 4)):
        assert net.forward(x) == 0.7


def test_forward_matches_naive_loops():
    rng = np.random.default_rng(3)
    for _ in range(10):
        net = QNetwork((16, 32, 32, 32, 1), seed=rng)
        net.biases[1][:] = rng.normal(size=32)
        x = rng.random(16)
        assert net.forward(x) == pytest.approx(naive_forward(net, x), rel=1e-12)
        assert net.kernel_forward(x) == pytest.approx(naive_forward(net, x), rel=1e-12)


def test_forward_batch_and_determinism():
    net = QNetwork.for_qubits(8, seed=2)
    xs = np.random.default_rng(0).random((4, 8))
    batch = net.forward(xs)
    assert batch.shape == (4,)
    assert [net.forward(x) for x in xs] == pytest.approx(batch.tolist(), rel=1e-14)
    assert net.forward(xs[0]) == net.forward(xs[0])


def test_dimension_mismatch():
    net = QNetwork.for_qubits(4, seed=0)
    with pytest.raises(ValueError, match="dimension"):
        net.forward(np.zeros(5))
    with pytest.raises(ValueError, match="dimension"):
        net.backward(np.zeros(3), 1.0)


def test_gradient_zero_at_target():
    net = QNetwork.for_qubits(6, seed=0)
    x = np.linspace(0, 1, 6)
    g = net.backward(x, net.forward(x))
    assert np.all(g == 0)
    assert net.loss(x, net.forward(x)) == 0.0


def test_single_weight_closed_form():
    net = QNetwork((1, 1), seed=0)
    net.params[:] = [1.5, 0.0]
    x, t = 2.0, 1.0
    g = net.backward(np.array([x]), t)
    assert g[0] == pytest.approx(2 * (1.5 * x - t) * x)
    assert g[1] == pytest.approx(2 * (1.5 * x - t))


def test_gradient_matches_finite_differences():
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(20):
        net = QNetwork((16, 32, 32, 32, 1), seed=rng)
        for b in net.biases:
            b[:] = rng.normal(scale=0.1, size=b.shape)
        x = rng.random(16)
        t = rng.normal()
        worst = max(worst, max_rel_error(net.backward(x, t), finite_difference_grad(net, x, t)))
    assert worst < 1e-4


def test_batch_gradient_is_mean():
    rng = np.random.default_rng(5)
    net = QNetwork((5, 7, 1), seed=rng)
    xs, ts = rng.random((3, 5)), rng.normal(size=3)
    expected = np.mean([net.backward(x, t) for x, t in zip(xs, ts)], axis=0)
    assert np.allclose(net.backward(xs, ts), expected)


def test_plain_gradient_step():
    net = QNetwork((3, 2, 1), seed=0)
    p0 = net.params.copy()
    g = np.arange(p0.size, dtype=float)
    Momentum(lr=0.1, momentum=0.0).update(net, g)
    assert np.allclose(net.params, p0 - 0.1 * g)
    p1 = net.params.copy()
    Adam().update(net, np.zeros_like(g))
    assert np.array_equal(net.params, p1)


def test_non_finite_gradient_names_layer():
    net = QNetwork((3, 2, 1), seed=0)
    g = np.zeros_like(net.params)
    g[-1] = np.nan
    with pytest.raises(FloatingPointError, match="layer 1"):
        Adam().update(net, g)


def test_repeated_updates_fit_one_sample():
    net = QNetwork.for_qubits(16, seed=4)
    opt = Adam(lr=1e-3)
    x = np.random.default_rng(0).random(16)
    for _ in range(3000):
        opt.update(net, net.backward(x, 3.0))
    assert net.loss(x, 3.0) < 1e-6


def test_target_network_sync():
    net = QNetwork.for_qubits(4, seed=0)
    target = TargetNetwork(net)
    x = np.array([0.1, 0.2, 0.3, 0.4])
    assert target.forward(x) == net.forward(x)
    Momentum(lr=0.5).update(net, np.ones_like(net.params))
    assert target.forward(x) != net.forward(x)
    sync_target(net, target)
    assert target.forward(x) == net.forward(x)
    assert target.sync_count == 1 and target.updates_since_sync == 0
    with pytest.raises(ValueError, match="architecture"):
        sync_target(QNetwork.for_qubits(5, seed=0), target)


def test_save_load_roundtrip(tmp_path):
    net = QNetwork.for_qubits(16, seed=9)
    net.metadata["normalization"] = "unit"
    p = tmp_path / "m.npz"
    net.save(p, config_hash="abc")
    back = QNetwork.load(p)
    xs = np.random.default_rng(0).random((10, 16))
    assert np.array_equal(back.forward(xs), net.forward(xs))
    assert back.metadata["normalization"] == "unit"
    assert back.metadata["config_hash"] == "abc"
