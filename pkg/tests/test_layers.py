"""layers: analytic gradients against central differences, plus shape/state errors."""

from __future__ import annotations

import numpy as np
import pytest

from sitslab.errors import ArgumentError, ShapeError, StateError
from sitslab.gradcheck import numerical_gradient, relative_error
from sitslab.layers import AttentionHead, DropoutMask, FcLayer, GruCell, softmax_cross_entropy
from sitslab.numeric import RngStream

TOL = 1e-4
INSTANCES = 20


def _check(analytic, f, param):
    err = relative_error(analytic, numerical_gradient(f, param))
    assert err <= TOL, f"relative error {err:.2e}"


# ── FC ────────────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("activation", ["none", "relu"])
def test_fc_gradients(activation):
    for i in range(INSTANCES):
        s = RngStream(100 + i)
        layer = FcLayer.create(4, 3, s.substream("w"), activation)
        layer.b[:] = s.normal(0.1, 3)
        x = s.normal(1.0, (5, 4)) if i % 2 else s.normal(1.0, 4)
        G = s.normal(1.0, (5, 3) if x.ndim == 2 else 3)

        def f():
            return float(np.sum(layer.forward(x) * G))

        f()
        gx, gW, gb = layer.backward(G)
        _check(gW, f, layer.W)
        _check(gb, f, layer.b)
        _check(gx, f, x)


def test_fc_time_distributed_rows_are_independent(rng):
    layer = FcLayer.create(3, 2, rng)
    xs = rng.normal(1.0, (4, 3))
    block = layer.forward(xs)
    for t in range(4):
        np.testing.assert_allclose(block[t], layer.forward(xs[t]))


def test_fc_errors(rng):
    layer = FcLayer.create(3, 2, rng)
    with pytest.raises(StateError):
        layer.backward(np.zeros(2))
    with pytest.raises(ShapeError):
        layer.forward(np.zeros(4))
    with pytest.raises(ShapeError):
        FcLayer(np.zeros((2, 3)), np.zeros(3))


# ── GRU ───────────────────────────────────────────────────────────────────────

def test_gru_sequence_gradients():
    for i in range(INSTANCES):
        s = RngStream(200 + i)
        T = 1 + i % 8
        cell = GruCell.create(2, 3, s.substream("w"))
        for b in (cell.b_z, cell.b_r, cell.b_h):
            b[:] = s.normal(0.3, 3)
        xs = s.normal(1.0, (T, 2))
        h0 = s.normal(0.5, 3)
        G = s.normal(1.0, (T, 3))

        def f():
            return float(np.sum(cell.forward(xs, h0) * G))

        f()
        gxs, gh0, grads = cell.backward(G)
        for name, p in cell.params().items():
            _check(grads[name], f, p)
        _check(gxs, f, xs)
        _check(gh0, f, h0)


def test_gru_step_gradients():
    for i in range(INSTANCES):
        s = RngStream(300 + i)
        cell = GruCell.create(3, 4, s.substream("w"))
        x, h = s.normal(1.0, 3), s.normal(0.5, 4)
        g = s.normal(1.0, 4)

        def f():
            return float(cell.step(x, h) @ g)

        f()
        gx, gh, grads = cell.backward(g[None, :])
        _check(gx[0], f, x)
        _check(gh, f, h)
        _check(grads["U_h"], f, cell.U_h)


def test_gru_step_matches_sequence(rng):
    cell = GruCell.create(2, 3, rng)
    xs = rng.normal(1.0, (4, 2))
    h = np.zeros(3)
    for t in range(4):
        h = cell.step(xs[t], h)
    np.testing.assert_allclose(cell.forward(xs)[-1], h, rtol=1e-12)


def test_gru_errors(rng):
    cell = GruCell.create(2, 3, rng)
    with pytest.raises(ArgumentError):
        cell.forward(np.zeros((0, 2)))
    with pytest.raises(ShapeError):
        cell.forward(np.zeros((3, 4)))
    with pytest.raises(StateError):
        GruCell.create(2, 3, rng).backward(np.zeros((1, 3)))


# ── attention ─────────────────────────────────────────────────────────────────

def test_attention_gradients():
    for i in range(INSTANCES):
        s = RngStream(400 + i)
        head = AttentionHead.create(4, s.substream("w"))
        head.b_a[:] = s.normal(0.2, 4)
        hs = s.normal(1.0, (1 + i % 7, 4))
        g = s.normal(1.0, 4)

        def f():
            return float(head.forward(hs)[0] @ g)

        f()
        ghs, grads = head.backward(g)
        for name, p in head.params().items():
            _check(grads[name], f, p)
        _check(ghs, f, hs)


def test_attention_weights_are_a_distribution():
    s = RngStream(5)
    head = AttentionHead.create(3, s.substream("w"))
    for _ in range(10_000):
        hs = s.normal(3.0, (int(s.integers(1, 9)), 3))
        feat, w = head.forward(hs)
        assert abs(w.sum() - 1.0) < 1e-9
        assert (w >= 0).all()


def test_attention_single_step_returns_that_step(rng):
    head = AttentionHead.create(3, rng)
    hs = rng.normal(1.0, (1, 3))
    feat, w = head.forward(hs)
    np.testing.assert_array_equal(w, [1.0])
    np.testing.assert_allclose(feat, hs[0])


# ── dropout ───────────────────────────────────────────────────────────────────

def test_dropout_eval_is_identity_and_train_is_unbiased(rng):
    drop = DropoutMask(0.4)
    x = np.ones((200, 50))
    assert drop.apply(x, rng, "eval") is x
    y = drop.apply(x, rng, "train")
    assert np.all((y == 0.0) | np.isclose(y, 1.0 / 0.6))
    assert abs(y.mean() - 1.0) < 0.03
    np.testing.assert_array_equal(drop.backward(np.ones_like(x)), y)


def test_dropout_rejects_bad_rate_and_missing_stream():
    with pytest.raises(ArgumentError):
        DropoutMask(1.0)
    with pytest.raises(ArgumentError):
        DropoutMask(0.5).apply(np.ones(3), None, "train")


# ── softmax cross-entropy ────────────────────────────────────────────────────

def test_softmax_cross_entropy_gradient():
    for i in range(INSTANCES):
        s = RngStream(500 + i)
        logits = s.normal(3.0, 6)
        c = int(s.integers(0, 6))

        def f():
            return softmax_cross_entropy(logits, c)[0]

        _check(softmax_cross_entropy(logits, c)[2], f, logits)


def test_softmax_cross_entropy_values():
    loss, probs, grad = softmax_cross_entropy(np.zeros(4), 2)
    assert loss == pytest.approx(np.log(4))
    np.testing.assert_allclose(probs, 0.25)
    assert grad.sum() == pytest.approx(0.0, abs=1e-15)
    loss, _, _ = softmax_cross_entropy(np.array([1000.0, -1000.0]), 0)
    assert loss == 0.0
    loss, _, _ = softmax_cross_entropy(np.array([1000.0, -1000.0]), 1)
    assert loss == pytest.approx(2000.0)
    with pytest.raises(ArgumentError):
        softmax_cross_entropy(np.zeros(3), 3)


# ── worked values and bounds ─────────────────────────────────────────────────

def test_scalar_gru_step_by_hand():
    cell = GruCell(*(np.ones((1, 1)) for _ in range(6)), *(np.zeros(1) for _ in range(3)))
    h = cell.step([1.0], np.zeros(1))
    # z = r = σ(1), h̃ = tanh(1), h = z·h̃
    assert h[0] == pytest.approx(0.7311 * 0.7616, abs=1e-4)
    assert h[0] == pytest.approx(0.5568, abs=1e-4)


def test_zero_gru_halves_the_state(rng):
    cell = GruCell.zeros(2, 3)
    np.testing.assert_array_equal(cell.step(rng.normal(1.0, 2), np.zeros(3)), 0.0)
    h = rng.normal(1.0, 3)
    np.testing.assert_allclose(cell.step(rng.normal(1.0, 2), h), 0.5 * h)
    np.testing.assert_array_equal(cell.forward(rng.normal(1.0, (6, 2))), 0.0)


def test_gru_states_stay_in_unit_box():
    for i in range(INSTANCES):
        s = RngStream(700 + i)
        cell = GruCell.create(3, 5, s.substream("w"))
        for p in cell.params().values():
            p *= 10.0
        hs = cell.forward(s.normal(5.0, (8, 3)))
        assert np.abs(hs).max() <= 1.0


def test_identical_states_get_uniform_attention(rng):
    head = AttentionHead.create(4, rng)
    h = rng.normal(1.0, 4)
    feat, w = head.forward(np.tile(h, (5, 1)))
    np.testing.assert_allclose(w, 0.2, rtol=1e-12)
    np.testing.assert_allclose(feat, h, rtol=1e-12)


def test_softmax_cross_entropy_worked_example_and_shift():
    loss, probs, _ = softmax_cross_entropy(np.array([1.0, 2.0]), 1)
    assert loss == pytest.approx(np.log(1.0 + np.exp(-1.0)))
    assert loss == pytest.approx(0.3133, abs=1e-4)
    shifted_loss, shifted_probs, _ = softmax_cross_entropy(np.array([1.0, 2.0]) + 57.0, 1)
    assert shifted_loss == pytest.approx(loss, rel=1e-12)
    np.testing.assert_allclose(shifted_probs, probs, rtol=1e-12)


def test_dropout_keeps_the_mean_over_many_draws():
    y = DropoutMask(0.4).apply(np.ones(100_000), RngStream(11), "train")
    assert 0.99 <= y.mean() <= 1.01
