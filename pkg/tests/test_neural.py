import io
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from wallfollow import neural as nn
from wallfollow.rng import XoshiroLanes


# ---------------------------------------------------------------------------
# shared input layer
# ---------------------------------------------------------------------------

def test_shared_zero_input_identity_activation():
    layer = nn.SharedInputLayer(4)
    layer.b = np.array([1.0, 2.0, 3.0, 4.0])
    out = nn.forward_shared(layer, np.zeros(4))
    assert out.shape == (4, 4)
    for i in range(4):
        assert (out[i] == layer.b[i]).all()


def test_shared_unit_weights_reproduce_input():
    layer = nn.SharedInputLayer(5)
    layer.w = np.ones(5)
    x = np.array([0.1, -0.5, 2.0, 3.5, -1.0])
    out = nn.forward_shared(layer, x)
    for i in range(5):
        assert np.array_equal(out[i], x)


def test_shared_matches_formula_oracle():
    rng = XoshiroLanes(42)
    layer = nn.SharedInputLayer(6, activation="relu")
    layer.w = rng.uniform(-2, 2, 6)
    layer.b = rng.uniform(-1, 1, 6)
    x = rng.uniform(-3, 3, 6)
    out = nn.forward_shared(layer, x)
    for i in range(6):
        for j in range(6):
            expected = max(layer.w[i] * x[j] + layer.b[i], 0.0)
            assert abs(out[i, j] - expected) <= 1e-12


def test_shared_batch_flatten_order():
    layer = nn.SharedInputLayer(3)
    layer.w = np.array([1.0, 2.0, 3.0])
    x = np.array([[1.0, 10.0, 100.0]])
    flat = layer.forward(x, train=False, rng=None)
    # row-major over (neuron i, position j)
    assert flat[0].tolist() == [1.0, 10.0, 100.0, 2.0, 20.0, 200.0, 3.0, 30.0, 300.0]


# ---------------------------------------------------------------------------
# softmax / cross-entropy
# ---------------------------------------------------------------------------

def test_softmax_constant_logits_uniform():
    assert nn.softmax(np.array([3.3, 3.3, 3.3, 3.3])).tolist() == [0.25] * 4


def test_softmax_shift_invariance_exact():
    logits = np.array([1.0, 2.0, 3.0, 4.0])
    assert np.array_equal(nn.softmax(logits), nn.softmax(logits + 5.0))


def test_softmax_formula_oracle():
    logits = np.array([1.0, 2.0, 3.0, 4.0])
    exp = [math.exp(v) for v in logits]
    expected = [v / sum(exp) for v in exp]
    assert nn.softmax(logits) == pytest.approx(expected, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(min_value=-700, max_value=700), min_size=4, max_size=4))
def test_softmax_sums_to_one(logits):
    probs = nn.softmax(np.array(logits))
    assert abs(probs.sum() - 1.0) <= 1e-12
    assert (probs >= 0).all()


def test_cross_entropy_certain_prediction():
    assert nn.cross_entropy(np.array([0.0, 1.0, 0.0, 0.0]), np.eye(4)[1]) == 0.0


def test_cross_entropy_uniform():
    assert nn.cross_entropy(np.full(4, 0.25), np.eye(4)[2]) == pytest.approx(math.log(4))


def test_cross_entropy_frozen_value():
    probs = np.array([0.3, 0.5, 0.1, 0.1])
    assert nn.cross_entropy(probs, np.eye(4)[0]) == pytest.approx(1.2039728043259361, abs=1e-12)


def test_cross_entropy_floor():
    probs = np.array([0.0, 1.0, 0.0, 0.0])
    assert nn.cross_entropy(probs, np.eye(4)[0]) == pytest.approx(-math.log(1e-12))


# ---------------------------------------------------------------------------
# batch norm
# ---------------------------------------------------------------------------

def test_batch_norm_constant_column_becomes_beta():
    layer = nn.BatchNorm(2)
    layer.beta = np.array([0.7, -0.2])
    batch = np.column_stack([np.full(8, 5.0), np.arange(8, dtype=float)])
    out = nn.batch_norm_forward(layer, batch, "train")
    assert out[:, 0] == pytest.approx(np.full(8, 0.7), abs=1e-9)


def test_batch_norm_train_moments():
    rng = XoshiroLanes(3)
    layer = nn.BatchNorm(4)
    layer.gamma = np.array([1.0, 2.0, 0.5, -1.5])
    layer.beta = np.array([0.0, 1.0, -1.0, 0.25])
    batch = rng.uniform(-4, 4, (256, 4))
    out = nn.batch_norm_forward(layer, batch, "train")
    assert out.mean(axis=0) == pytest.approx(layer.beta, abs=1e-6)
    assert out.std(axis=0) == pytest.approx(np.abs(layer.gamma), abs=1e-3)


def test_batch_norm_batch_of_one_rejected():
    layer = nn.BatchNorm(3)
    with pytest.raises(ValueError, match="batch of >= 2"):
        nn.batch_norm_forward(layer, np.ones((1, 3)), "train")


def test_batch_norm_infer_deterministic_and_uses_running_stats():
    layer = nn.BatchNorm(2)
    rng = XoshiroLanes(9)
    for _ in range(10):
        nn.batch_norm_forward(layer, rng.uniform(0, 2, (32, 2)), "train")
    query = rng.uniform(0, 2, (5, 2))
    a = nn.batch_norm_forward(layer, query, "infer")
    b = nn.batch_norm_forward(layer, query, "infer")
    assert np.array_equal(a, b)
    # infer mode must not depend on the query batch statistics
    c = nn.batch_norm_forward(layer, query[:2], "infer")
    assert np.array_equal(a[:2], c)


def test_batch_norm_mode_validation():
    with pytest.raises(ValueError, match="mode"):
        nn.batch_norm_forward(nn.BatchNorm(1), np.ones((4, 1)), "predict")


# ---------------------------------------------------------------------------
# dropout
# ---------------------------------------------------------------------------

def test_dropout_rate_zero_is_identity():
    batch = XoshiroLanes(1).uniform(-1, 1, (6, 5))
    out = nn.dropout_apply(0.0, "train", batch, seed=3)
    assert np.array_equal(out, batch)


def test_dropout_infer_is_identity():
    batch = XoshiroLanes(2).uniform(-1, 1, (6, 5))
    out = nn.dropout_apply(0.9, "infer", batch, seed=3)
    assert np.array_equal(out, batch)


def test_dropout_preserves_expectation():
    batch = np.ones((1000, 1000))
    out = nn.dropout_apply(0.1, "train", batch, seed=12)
    assert out.mean() == pytest.approx(1.0, abs=0.01)
    kept = out[out != 0]
    assert kept == pytest.approx(np.full(kept.shape, 1.0 / 0.9), abs=1e-12)


def test_dropout_rate_validation():
    with pytest.raises(ValueError):
        nn.Dropout(1.0)


# ---------------------------------------------------------------------------
# adadelta
# ---------------------------------------------------------------------------

def test_adadelta_zero_gradient_gives_zero_delta():
    state = nn.AdadeltaState(shapes=[(3,)])
    state.acc_grad[0][:] = 0.4
    state.acc_delta[0][:] = 0.1
    deltas = nn.adadelta_step(state, [np.zeros(3)])
    assert (deltas[0] == 0.0).all()
    assert state.acc_grad[0] == pytest.approx(np.full(3, 0.95 * 0.4))
    assert state.acc_delta[0] == pytest.approx(np.full(3, 0.95 * 0.1))


def test_adadelta_first_step_opposes_gradient():
    state = nn.AdadeltaState(shapes=[(4,)])
    grad = np.array([0.5, -1.0, 2.0, -0.01])
    deltas = nn.adadelta_step(state, [grad])
    assert (np.sign(deltas[0]) == -np.sign(grad)).all()


def test_adadelta_first_step_scalar_formula():
    state = nn.AdadeltaState(shapes=[(1,)])
    g = 0.3
    delta = nn.adadelta_step(state, [np.array([g])])[0][0]
    expected = -math.sqrt(1e-6) / math.sqrt(0.05 * g * g + 1e-6) * g
    assert delta == pytest.approx(expected, abs=1e-15)


def test_adadelta_defaults():
    state = nn.AdadeltaState(shapes=[(1,)])
    assert state.rho == 0.95
    assert state.eps == 1e-6


# ---------------------------------------------------------------------------
# backprop and presets
# ---------------------------------------------------------------------------

def _finite_difference_check(net, x, y, seed, h=1e-4, rtol=1e-4):
    def loss_at():
        probs = net.forward(x, train=True, rng=XoshiroLanes(seed))
        return nn.cross_entropy(probs, y)

    _, grads = nn.backprop(net, x, y, train=True, rng=XoshiroLanes(seed))
    for array, grad in zip(net.parameters(), grads):
        flat, gflat = array.reshape(-1), grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            plus = loss_at()
            flat[i] = original - h
            minus = loss_at()
            flat[i] = original
            fd = (plus - minus) / (2 * h)
            assert gflat[i] == pytest.approx(fd, rel=rtol, abs=1e-7)


def test_gradients_every_layer_type():
    d = 3
    layers = [
        nn.SharedInputLayer(d), nn.BatchNorm(d * d), nn.Relu(), nn.Dropout(0.25),
        nn.Dense(d * d, 5), nn.BatchNorm(5), nn.Relu(), nn.Dropout(0.25),
        nn.Dense(5, 4),
    ]
    net = nn.Network(layers)
    net.init_params(3)
    x = XoshiroLanes(8).uniform(-2, 2, (3, d))
    y = np.eye(4)[np.array([0, 2, 3])]
    _finite_difference_check(net, x, y, seed=11)


def test_gradients_relu_shared_layer():
    net = nn.Network([nn.SharedInputLayer(3, activation="relu"), nn.Dense(9, 4)])
    net.init_params(5)
    x = XoshiroLanes(6).uniform(-2, 2, (3, 3))
    y = np.eye(4)[np.array([1, 0, 2])]
    _finite_difference_check(net, x, y, seed=7)


def test_zero_network_uniform_probs_and_bias_gradient():
    net = nn.build_preset("FNN1", 4, init_seed=1)
    for p in net.parameters():
        p[:] = 0.0
    x = XoshiroLanes(4).uniform(-1, 1, (6, 4))
    y = np.eye(4)[np.array([0, 1, 2, 3, 0, 1])]
    probs = net.forward(x, train=True, rng=XoshiroLanes(0))
    assert probs == pytest.approx(np.full((6, 4), 0.25))
    _, grads = nn.backprop(net, x, y, train=True, rng=XoshiroLanes(0))
    output_bias_grad = grads[-1]
    expected = (np.full((6, 4), 0.25) - y).mean(axis=0)
    assert output_bias_grad == pytest.approx(expected, abs=1e-12)


def test_duplicated_batch_leaves_mean_gradients_unchanged():
    net = nn.build_preset("DFNN3", 4, init_seed=2)
    x = XoshiroLanes(9).uniform(-1, 1, (5, 4))
    y = np.eye(4)[np.array([0, 1, 2, 3, 1])]
    _, grads_single = nn.backprop(net, x, y)
    _, grads_double = nn.backprop(net, np.vstack([x, x]), np.vstack([y, y]))
    for a, b in zip(grads_single, grads_double):
        assert a == pytest.approx(b, abs=1e-12)


def test_preset_dfnn_ws_shapes():
    net = nn.build_preset("DFNN_WS", 24, init_seed=7)
    shared = net.layers[0]
    assert isinstance(shared, nn.SharedInputLayer)
    assert shared.w.size + shared.b.size == 48
    first_dense = next(l for l in net.layers if isinstance(l, nn.Dense))
    assert first_dense.n_in == 576
    dense_sizes = [l.n_out for l in net.layers if isinstance(l, nn.Dense)]
    assert dense_sizes == [16, 8, 4, 4]
    assert sum(isinstance(l, nn.BatchNorm) for l in net.layers) == 4
    assert sum(isinstance(l, nn.Dropout) for l in net.layers) == 4


def test_preset_dfnn_ws_generalizes_to_narrow_widths():
    net = nn.build_preset("DFNN_WS", 4, init_seed=7)
    assert net.layers[0].d == 4
    first_dense = next(l for l in net.layers if isinstance(l, nn.Dense))
    assert first_dense.n_in == 16


def test_preset_fnn1_width2():
    net = nn.build_preset("FNN1", 2, init_seed=0)
    dense = [l for l in net.layers if isinstance(l, nn.Dense)]
    assert [(d.n_in, d.n_out) for d in dense] == [(2, 16), (16, 4)]


def test_preset_dfnn3_hidden_sizes():
    net = nn.build_preset("DFNN3", 24, init_seed=0)
    dense = [l for l in net.layers if isinstance(l, nn.Dense)]
    assert [d.n_out for d in dense] == [16, 8, 4, 4]


def test_preset_unknown_name():
    with pytest.raises(ValueError, match="unknown preset"):
        nn.build_preset("CNN", 24)


@settings(max_examples=20, deadline=None)
@given(st.integers(min_value=0, max_value=10**6))
def test_forward_produces_probability_vector(seed):
    rng = XoshiroLanes(seed)
    for preset, width in (("FNN1", 2), ("DFNN3", 4), ("DFNN_WS", 4)):
        net = nn.build_preset(preset, width, init_seed=seed)
        x = rng.uniform(-5, 5, (3, width))
        probs = net.forward(x)
        assert np.abs(probs.sum(axis=1) - 1.0).max() <= 1e-9
        assert (probs > 0).all() and (probs < 1).all()


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

def _toy_clusters(n_per_class=6, seed=21):
    rng = XoshiroLanes(seed)
    centers = np.array([[2.0, 2.0], [-2.0, 2.0], [-2.0, -2.0], [2.0, -2.0]])
    rows, labels = [], []
    for k, center in enumerate(centers):
        rows.append(center + 0.3 * rng.uniform(-1, 1, (n_per_class, 2)))
        labels += [k] * n_per_class
    features = np.vstack(rows)
    features = (features - features.mean(axis=0)) / features.std(axis=0, ddof=1)
    return features, np.array(labels, dtype=np.int64)


def test_memorizes_ten_samples_in_200_epochs():
    features, labels = _toy_clusters(n_per_class=6)
    keep = np.arange(0, 24, 3)[:10]
    net = nn.build_preset("FNN1", 2, init_seed=4)
    config = nn.TrainConfig(batch_size=32, epochs=200, dropout=0.0, seed=5)
    nn.train_network(net, features[keep], labels[keep], config)
    assert (net.predict(features[keep]) == labels[keep]).all()


def test_training_is_bit_deterministic():
    features, labels = _toy_clusters()
    nets = []
    for _ in range(2):
        net = nn.build_preset("DFNN_WS", 2, init_seed=10)
        config = nn.TrainConfig(batch_size=8, epochs=3, dropout=0.1, seed=77)
        nn.train_network(net, features, labels, config)
        nets.append(net)
    for a, b in zip(nets[0].parameters(), nets[1].parameters()):
        assert np.array_equal(a, b)
    bn = [l for l in nets[0].layers if isinstance(l, nn.BatchNorm)]
    bn2 = [l for l in nets[1].layers if isinstance(l, nn.BatchNorm)]
    for a, b in zip(bn, bn2):
        assert np.array_equal(a.running_mean, b.running_mean)
        assert np.array_equal(a.running_var, b.running_var)


def test_loss_non_increasing_first_five_steps_on_fixed_batch():
    features, labels = _toy_clusters()
    onehot = np.eye(4)[labels]
    net = nn.build_preset("FNN1", 2, init_seed=3)
    state = nn.AdadeltaState(shapes=[p.shape for p in net.parameters()])
    losses = [nn.cross_entropy(net.forward(features), onehot)]
    for _ in range(5):
        _, grads = nn.backprop(net, features, onehot, train=True)
        for p, delta in zip(net.parameters(), nn.adadelta_step(state, grads)):
            p += delta
        losses.append(nn.cross_entropy(net.forward(features), onehot))
    assert all(b <= a + 1e-12 for a, b in zip(losses, losses[1:]))


def test_inference_is_stateless():
    features, labels = _toy_clusters()
    net = nn.build_preset("DFNN_WS", 2, init_seed=1)
    nn.train_network(net, features, labels,
                     nn.TrainConfig(batch_size=8, epochs=2, dropout=0.1, seed=3))
    a = net.forward(features[:5])
    b = net.forward(features[:5])
    assert np.array_equal(a, b)


def test_training_log_lines():
    features, labels = _toy_clusters()
    net = nn.build_preset("FNN1", 2, init_seed=0)
    log = io.StringIO()
    nn.train_network(net, features, labels,
                     nn.TrainConfig(batch_size=8, epochs=3, dropout=0.0, seed=1), log=log)
    lines = log.getvalue().strip().splitlines()
    assert len(lines) == 3
    assert lines[0].startswith("epoch=1 loss=")
    assert "acc=" in lines[0]


def test_train_rejects_empty():
    net = nn.build_preset("FNN1", 2, init_seed=0)
    with pytest.raises(ValueError, match="empty"):
        nn.train_network(net, np.zeros((0, 2)), np.zeros(0, dtype=np.int64),
                         nn.TrainConfig())


def test_train_config_validation():
    with pytest.raises(ValueError):
        nn.TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        nn.TrainConfig(dropout=1.0)
