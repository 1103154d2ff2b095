import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from churnlab.nn import (
    LSTM, AdamState, Dense, NumericalError, TrainConfig, adam_step, bce_loss, hard_sigmoid, hard_sigmoid_grad,
    sigmoid, stratified_split, train,
)

from gradcheck import check_dense, check_lstm


@pytest.mark.parametrize("seed", range(10))
def test_dense_gradients(seed):
    assert check_dense(np.random.default_rng(seed)) <= 1.0


@pytest.mark.parametrize("seed", range(10))
def test_lstm_gradients_including_initial_states(seed):
    assert check_lstm(np.random.default_rng(100 + seed)) <= 1.0


def test_hard_sigmoid_values():
    x = np.array([-3.0, -2.5, -1.0, 0.0, 1.0, 2.5, 3.0])
    np.testing.assert_allclose(hard_sigmoid(x), [0.0, 0.0, 0.3, 0.5, 0.7, 1.0, 1.0])
    np.testing.assert_array_equal(hard_sigmoid_grad(x), [0, 0, 0.2, 0.2, 0.2, 0, 0])


@settings(max_examples=200)
@given(st.floats(-700, 700))
def test_sigmoid_is_stable_and_symmetric(x):
    s = sigmoid(np.array([x, -x]))
    assert np.isfinite(s).all()
    assert s[0] + s[1] == pytest.approx(1.0, abs=1e-12)


def test_bce_at_half_is_ln2():
    loss, grad = bce_loss(np.full(8, 0.5), np.array([0, 1] * 4))
    assert abs(loss - math.log(2)) <= 1e-12
    np.testing.assert_allclose(grad, np.where(np.array([0, 1] * 4), -2.0, 2.0) / 8)


def test_bce_clamps_and_zeroes_gradient_at_the_clamp():
    loss, grad = bce_loss(np.array([0.0, 1.0]), np.array([1.0, 0.0]))
    assert loss == pytest.approx(-math.log(1e-7))
    assert np.all(grad == 0.0)


def test_lstm_layout_and_forget_bias():
    layer = LSTM(3, 4, np.random.default_rng(0))
    assert layer.W.shape == (16, 3) and layer.U.shape == (16, 4) and layer.b.shape == (16,)
    _, _, bf = layer.gate("f")
    np.testing.assert_array_equal(bf, 1.0)
    for g in ("i", "g", "o"):
        np.testing.assert_array_equal(layer.gate(g)[2], 0.0)


def test_lstm_single_step_matches_hand_computation():
    rng = np.random.default_rng(1)
    layer = LSTM(2, 3, rng)
    x = rng.normal(size=(1, 1, 2))
    h0, c0 = rng.normal(size=(1, 3)), rng.normal(size=(1, 3))
    z = {g: x[0, 0] @ layer.gate(g)[0].T + h0[0] @ layer.gate(g)[1].T + layer.gate(g)[2] for g in "ifgo"}
    c = hard_sigmoid(z["f"]) * c0[0] + hard_sigmoid(z["i"]) * np.tanh(z["g"])
    h = hard_sigmoid(z["o"]) * np.tanh(c)
    np.testing.assert_allclose(layer.forward(x, h0, c0)[0][0], h, rtol=1e-12, atol=1e-14)


def test_glorot_limits():
    layer = Dense(30, 10, rng=np.random.default_rng(0))
    assert np.abs(layer.W).max() <= math.sqrt(6 / 40)
    assert np.all(layer.b == 0)


def test_adam_first_step_moves_by_learning_rate():
    p = {"w": np.array([1.0, -2.0, 3.0])}
    g = {"w": np.array([0.5, -4.0, 1e-3])}
    adam_step(p, g, AdamState(), lr=0.01)
    # after bias correction m/sqrt(v) = sign(g) (up to eps)
    np.testing.assert_allclose(p["w"], [0.99, -1.99, 2.99], rtol=0, atol=1e-7)


def test_adam_two_steps_oracle():
    b1, b2, lr, eps = 0.9, 0.999, 0.1, 1e-8
    p = {"w": np.array([0.3])}
    gs = [np.array([0.2]), np.array([-0.1])]
    state = AdamState()
    m = v = 0.0
    w = 0.3
    for t, g in enumerate(gs, start=1):
        adam_step(p, {"w": g.copy()}, state, lr, b1, b2, eps)
        m = b1 * m + (1 - b1) * g[0]
        v = b2 * v + (1 - b2) * g[0] ** 2
        w -= lr * (m / (1 - b1**t)) / (math.sqrt(v / (1 - b2**t)) + eps)
    assert p["w"][0] == pytest.approx(w, abs=1e-15)


def test_stratified_split_keeps_class_ratio():
    y = np.array([0] * 90 + [1] * 30)
    tr, va = stratified_split(y, 0.1, np.random.default_rng(0))
    assert np.intersect1d(tr, va).size == 0 and tr.size + va.size == y.size
    assert y[va].sum() == 3 and (1 - y[va]).sum() == 9


class Logistic:
    """One-weight logistic model used to exercise the training loop."""

    def __init__(self, dim, rng):
        self.layer = Dense(dim, 1, "sigmoid", rng)

    def trainable_params(self):
        return self.layer.params

    def forward(self, x, train=False):
        p, cache = self.layer.forward(x)
        return p[:, 0], cache

    def backward(self, cache, dp):
        return self.layer.backward(cache, dp[:, None])[0]


def _toy(n=600, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(n, 3))
    y = (x @ np.array([1.5, -1.0, 0.5]) + rng.normal(0, 0.5, n) > 0).astype(float)
    return x, y


def test_training_learns_and_is_deterministic():
    x, y = _toy()
    cfg = TrainConfig(batch_size=32, max_epochs=30, learning_rate=0.05, seed=3)
    a, b = Logistic(3, np.random.default_rng(0)), Logistic(3, np.random.default_rng(0))
    ha, hb = train(a, x, y, cfg), train(b, x, y, cfg)
    assert ha.val_loss == hb.val_loss
    np.testing.assert_array_equal(a.layer.W, b.layer.W)
    assert ha.val_loss[ha.best_epoch] < 0.45


def test_early_stopping_restores_best_weights():
    x, y = _toy()
    cfg = TrainConfig(batch_size=32, max_epochs=100, patience=4, learning_rate=0.05, seed=0)
    model = Logistic(3, np.random.default_rng(0))
    snapshots = {}

    def hook(epoch, m):
        # push the weights away from the optimum after epoch 5
        if epoch >= 5:
            m.layer.W += 0.5 * (epoch - 4)
        snapshots[epoch] = m.layer.W.copy()

    hist = train(model, x, y, cfg, epoch_hook=hook)
    best = int(np.argmin(hist.val_loss))
    assert hist.best_epoch == best
    assert hist.epochs - 1 - best == cfg.patience
    np.testing.assert_array_equal(model.layer.W, snapshots[best])


def test_too_few_samples_rejected():
    x, y = _toy(n=100)
    with pytest.raises(ValueError):
        train(Logistic(3, np.random.default_rng(0)), x, y, TrainConfig(batch_size=64))


def test_non_finite_loss_raises():
    x, y = _toy()

    def hook(epoch, m):
        m.layer.W[...] = np.nan

    with pytest.raises(NumericalError):
        train(Logistic(3, np.random.default_rng(0)), x, y, TrainConfig(batch_size=64), epoch_hook=hook)


def test_scalar_lstm_two_steps_by_hand():
    layer = LSTM(1, 1)
    # gate order i, f, g, o
    layer.W[:, 0] = [0.5, -0.3, 0.8, 0.1]
    layer.U[:, 0] = [0.2, 0.4, -0.6, 0.7]
    layer.b[:] = [0.1, 1.0, -0.2, 0.0]
    xs = [0.9, -1.4]
    h = c = 0.0
    hs = lambda z: min(max(0.2 * z + 0.5, 0.0), 1.0)  # noqa: E731
    for x in xs:
        i = hs(0.5 * x + 0.2 * h + 0.1)
        f = hs(-0.3 * x + 0.4 * h + 1.0)
        g = math.tanh(0.8 * x - 0.6 * h - 0.2)
        o = hs(0.1 * x + 0.7 * h)
        c = f * c + i * g
        h = o * math.tanh(c)
    got = layer.forward(np.array(xs).reshape(1, 2, 1))[0][0, 0]
    assert got == pytest.approx(h, abs=1e-14)


def test_zero_weights_give_zero_state():
    layer = LSTM(3, 2)
    layer.W[:] = layer.U[:] = layer.b[:] = 0.0
    x = np.random.default_rng(0).normal(size=(4, 5, 3))
    np.testing.assert_array_equal(layer.forward(x)[0], 0.0)


def test_identical_consecutive_steps_commute():
    layer = LSTM(2, 3, np.random.default_rng(2))
    x = np.random.default_rng(3).normal(size=(1, 4, 2))
    x[0, 2] = x[0, 1]
    swapped = x[:, [0, 2, 1, 3]]
    np.testing.assert_array_equal(layer.forward(x)[0], layer.forward(swapped)[0])


def test_zero_upstream_gradient_gives_zero_gradients():
    layer = LSTM(2, 3, np.random.default_rng(2))
    _, cache = layer.forward(np.ones((2, 3, 2)))
    grads, dx, dh0, dc0 = layer.backward(cache, np.zeros((2, 3)))
    assert all(not g.any() for g in grads.values()) and not dx.any() and not dh0.any() and not dc0.any()


def test_saturated_gates_block_input_gradients():
    rng = np.random.default_rng(4)
    layer = LSTM(2, 3, rng)
    layer.W *= 0.1
    layer.U *= 0.1
    x = rng.normal(size=(2, 5, 2))
    w = rng.normal(size=(2, 3))
    # open: input gradients flow
    _, cache = layer.forward(x)
    assert np.abs(layer.backward(cache, w)[1]).max() > 1e-6
    # input gate shut, forget and output gates wide open: |pre-activation| > 2.5 everywhere
    H = 3
    layer.b[:H], layer.b[H:2 * H], layer.b[3 * H:] = -10.0, 10.0, 10.0
    _, cache = layer.forward(x)
    grads, dx, _, _ = layer.backward(cache, w)
    np.testing.assert_array_equal(dx, 0.0)
    assert not grads["W"].any()


def test_dense_identity_and_sigmoid_midpoint():
    d = Dense(3, 3, "linear")
    d.W[:] = np.eye(3)
    x = np.random.default_rng(0).normal(size=(2, 3))
    np.testing.assert_array_equal(d.forward(x)[0], x)
    s = Dense(3, 1, "sigmoid")
    s.W[:] = 0.0
    assert s.forward(x)[0][0, 0] == 0.5


def test_bce_matches_scalar_sum():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.99, 50)
    y = rng.integers(0, 2, 50)
    ref = -sum(math.log(a) if b else math.log(1 - a) for a, b in zip(p, y)) / 50
    assert abs(bce_loss(p, y)[0] - ref) <= 1e-12
    assert bce_loss(np.array([1.0, 0.0]), np.array([1, 0]))[0] <= -math.log(1 - 1e-7) + 1e-15


def test_adam_closed_form_first_step_and_zero_gradient():
    p = {"w": np.array([0.0]), "z": np.array([2.0])}
    state = AdamState()
    adam_step(p, {"w": np.array([1.0]), "z": np.array([0.0])}, state, lr=1e-3)
    assert p["w"][0] == pytest.approx(-1e-3 / (1 + 1e-8), abs=1e-18)
    assert p["z"][0] == 2.0 and state.t == 1
    twins = {"a": np.array([1.0]), "b": np.array([1.0])}
    adam_step(twins, {"a": np.array([0.3]), "b": np.array([0.3])}, AdamState())
    assert twins["a"][0] == twins["b"][0]


def test_separable_toy_set_is_learned():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 2))
    y = (x[:, 0] + x[:, 1] > 0).astype(float)
    x += np.where(y[:, None] > 0, 0.3, -0.3)  # margin
    model = Logistic(2, np.random.default_rng(1))
    train(model, x, y, TrainConfig(batch_size=16, learning_rate=0.05, seed=0))
    acc = np.mean((model.forward(x)[0] > 0.5) == y)
    assert acc >= 0.99
