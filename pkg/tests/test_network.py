import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from oracles import scalar_forward
from stepnet.classifier import NearestCentroidClassifier
from stepnet.exceptions import ConfigError, DimensionMismatch
from stepnet.network import (
    Network,
    NetworkConfig,
    RandomStepNetwork,
    forward,
    forward_batch,
    hidden_activations,
    init_network,
    load_network,
    save_network,
    step,
)


@pytest.mark.parametrize("x, expected", [(0.7, 1.0), (-0.2, 0.0), (0.0, 0.0), (-0.0, 0.0), (1e-30, 1.0)])
def test_step(x, expected):
    assert step(x) == expected


def test_step_rejects_nan():
    with pytest.raises(AssertionError):
        step(float("nan"))


@pytest.mark.parametrize("depth", [0, 1, 15])
def test_layer_count(depth):
    net = init_network(NetworkConfig(hidden_layers=depth, width=8))
    assert len(net.layers) == depth + 1


def test_default_bound_is_one_over_28():
    config = NetworkConfig()
    assert config.init_bound == pytest.approx(1 / 28)
    net = init_network(NetworkConfig(hidden_layers=1, seed=3))
    bound = np.float32(1 / 28)
    for layer in net.layers:
        assert np.abs(layer.weights).max() <= bound
        assert np.abs(layer.bias).max() <= bound
        assert layer.weights.dtype == np.float32


def test_weight_distribution_is_centred_uniform():
    net = init_network(NetworkConfig(hidden_layers=0, seed=11))
    w = net.layers[0].weights.astype(np.float64).ravel()
    assert w.size >= 10**5
    bound = 1 / 28
    se = bound / np.sqrt(3) / np.sqrt(w.size)
    assert abs(w.mean()) < 3 * se
    assert w.var() == pytest.approx(bound**2 / 3, rel=0.01)


def test_same_seed_bit_identical():
    a = init_network(NetworkConfig(hidden_layers=2, width=32, seed=99))
    b = init_network(NetworkConfig(hidden_layers=2, width=32, seed=99))
    c = init_network(NetworkConfig(hidden_layers=2, width=32, seed=100))
    for la, lb in zip(a.layers, b.layers):
        assert la.weights.tobytes() == lb.weights.tobytes()
        assert la.bias.tobytes() == lb.bias.tobytes()
    assert a.layers[0].weights.tobytes() != c.layers[0].weights.tobytes()


def test_sampling_order_layers_then_bias():
    # layer i of a deeper network equals layer i of a shallower one with the same seed
    shallow = init_network(NetworkConfig(hidden_layers=0, width=5, seed=4))
    deep = init_network(NetworkConfig(hidden_layers=2, width=5, seed=4))
    np.testing.assert_array_equal(shallow.layers[0].weights, deep.layers[0].weights)
    np.testing.assert_array_equal(shallow.layers[0].bias, deep.layers[0].bias)
    rng = np.random.Generator(np.random.PCG64(4))
    expected_w = rng.uniform(-1 / np.sqrt(5), 1 / np.sqrt(5), size=(5, 5)).astype(np.float32)
    np.testing.assert_array_equal(deep.layers[0].weights, expected_w)


def test_no_bias_mode():
    net = init_network(NetworkConfig(hidden_layers=1, width=4, bias_enabled=False))
    assert all(layer.bias is None for layer in net.layers)


@pytest.mark.parametrize("kwargs", [dict(hidden_layers=-1), dict(width=0), dict(seed=-1),
                                    dict(seed=2**64), dict(init_bound=0.0), dict(init_bound=float("inf"))])
def test_invalid_config(kwargs):
    with pytest.raises(ConfigError):
        NetworkConfig(**kwargs)


def test_weights_are_immutable():
    net = init_network(NetworkConfig(width=4))
    with pytest.raises(ValueError):
        net.layers[0].weights[0, 0] = 1.0


def _identity_net(width, hidden):
    config = NetworkConfig(hidden_layers=hidden, width=width, bias_enabled=False)
    return Network.from_layers(config, [(np.eye(width), None)] * (hidden + 1))


def test_forward_identity_zero_hidden():
    x = np.array([0.3, -1.5, 2.0, 0.0], dtype=np.float32)
    np.testing.assert_array_equal(forward(_identity_net(4, 0), x), x)


def test_forward_identity_one_hidden():
    out = forward(_identity_net(3, 1), [0.5, -0.5, 0.0])
    assert out.tolist() == [1.0, 0.0, 0.0]


def test_forward_output_activation_flag():
    config = NetworkConfig(hidden_layers=0, width=3, bias_enabled=False, output_activation=True)
    net = Network.from_layers(config, [(np.eye(3), None)])
    assert forward(net, [0.5, -0.5, 0.0]).tolist() == [1.0, 0.0, 0.0]


def test_forward_matches_scalar_loop_width3():
    net = init_network(NetworkConfig(hidden_layers=1, width=3, seed=7))
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = rng.random(3).astype(np.float32)
        expected, margin = scalar_forward(net, x)
        assert margin > 1e-5
        np.testing.assert_allclose(forward(net, x), expected, atol=1e-6)


def test_forward_dimension_mismatch():
    net = init_network(NetworkConfig(width=4))
    with pytest.raises(DimensionMismatch):
        forward(net, np.zeros(5))
    with pytest.raises(DimensionMismatch):
        forward_batch(net, np.zeros((2, 5)))
    with pytest.raises(DimensionMismatch):
        forward_batch(net, np.zeros(4))


def test_forward_batch_empty_and_single():
    net = init_network(NetworkConfig(hidden_layers=2, width=16, seed=1))
    assert forward_batch(net, np.zeros((0, 16))).shape == (0, 16)
    x = np.random.default_rng(1).random((1, 16), dtype=np.float32)
    np.testing.assert_allclose(forward_batch(net, x)[0], forward(net, x[0]), atol=1e-5)


def test_forward_batch_rows_match_forward_784():
    net = init_network(NetworkConfig(hidden_layers=2, seed=5))
    X = np.random.default_rng(2).random((17, 784), dtype=np.float32)
    batch = forward_batch(net, X, block_rows=5)
    for r in range(17):
        ref, margin = scalar_forward(net, X[r])
        if margin > 1e-5:
            np.testing.assert_allclose(batch[r], ref, atol=1e-5)
        np.testing.assert_allclose(batch[r], forward(net, X[r]), atol=1e-5)


def test_forward_batch_independent_of_thread_count():
    net = init_network(NetworkConfig(hidden_layers=3, seed=8))
    X = np.random.default_rng(3).random((1000, 784), dtype=np.float32)
    serial = forward_batch(net, X, block_rows=128, n_jobs=1)
    threaded = forward_batch(net, X, block_rows=128, n_jobs=4)
    assert serial.tobytes() == threaded.tobytes()


def test_hidden_activations_binary():
    net = init_network(NetworkConfig(hidden_layers=3, width=16, seed=2))
    acts = hidden_activations(net, np.random.default_rng(0).random((50, 16)))
    assert len(acts) == 3
    for a in acts:
        assert set(np.unique(a)) <= {0.0, 1.0}


def test_linear_without_hidden_layers():
    net = init_network(NetworkConfig(hidden_layers=0, width=784, bias_enabled=False, seed=6))
    rng = np.random.default_rng(4)
    x, y = rng.random(784), rng.random(784)
    alpha, beta = 0.7, -1.3
    lhs = forward(net, alpha * x + beta * y)
    rhs = alpha * forward(net, x) + beta * forward(net, y)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-4, atol=1e-5)


def test_identity_network():
    net = Network.identity(784)
    X = np.random.default_rng(5).random((10, 784), dtype=np.float32)
    assert forward_batch(net, X).tobytes() == X.tobytes()


@pytest.mark.parametrize("bias", [True, False])
def test_snapshot_round_trip(tmp_path, bias):
    net = init_network(NetworkConfig(hidden_layers=2, width=6, seed=12, bias_enabled=bias))
    path = tmp_path / "net.npz"
    save_network(net, path)
    loaded = load_network(path)
    assert loaded.config == net.config
    for a, b in zip(net.layers, loaded.layers):
        assert a.weights.tobytes() == b.weights.tobytes()
        assert (a.bias is None) == (b.bias is None)


def test_from_layers_validation():
    config = NetworkConfig(hidden_layers=1, width=3, bias_enabled=False)
    with pytest.raises(ConfigError):
        Network.from_layers(config, [(np.eye(3), None)])
    with pytest.raises(DimensionMismatch):
        Network.from_layers(config, [(np.eye(3), None), (np.eye(4), None)])
    with pytest.raises(ConfigError):
        Network.from_layers(config, [(np.eye(3), np.zeros(3)), (np.eye(3), None)])


def test_estimator_params_and_clone():
    est = RandomStepNetwork(hidden_layers=2, width=16, seed=3)
    params = est.get_params()
    assert params["hidden_layers"] == 2 and params["seed"] == 3
    twin = clone(est).set_params(seed=4)
    assert twin.seed == 4 and est.seed == 3


def test_estimator_transform_matches_forward_batch():
    X = np.random.default_rng(6).random((30, 16), dtype=np.float32)
    est = RandomStepNetwork(hidden_layers=1, width=16, seed=9).fit(X)
    assert est.n_features_in_ == 16
    expected = forward_batch(init_network(NetworkConfig(hidden_layers=1, width=16, seed=9)), X)
    np.testing.assert_array_equal(est.transform(X), expected)
    np.testing.assert_array_equal(est.fit_transform(X), expected)


def test_estimator_rejects_wrong_width():
    with pytest.raises(DimensionMismatch):
        RandomStepNetwork(width=16).fit(np.zeros((3, 8)))
    est = RandomStepNetwork(width=16).fit(np.zeros((3, 16)))
    with pytest.raises(ValueError):
        est.transform(np.zeros((3, 8)))


def test_pipeline_composes():
    rng = np.random.default_rng(7)
    centers = rng.random((3, 16)) * 4
    y = np.repeat(np.arange(3), 20)
    X = (centers[y] + rng.normal(scale=0.1, size=(60, 16))).astype(np.float32)
    pipe = make_pipeline(RandomStepNetwork(hidden_layers=0, width=16, seed=1), NearestCentroidClassifier())
    pipe.fit(X, y)
    assert pipe.score(X, y) == 1.0
