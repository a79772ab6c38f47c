"""model: end-to-end loss gradients, loss weighting, prediction and checkpoints."""

from __future__ import annotations

import json

import numpy as np
import pytest

from sitslab.config import StreamConfig
from sitslab.errors import ArgumentError, CheckpointError, ShapeError, StateError
from sitslab.gradcheck import numerical_gradient, relative_error
from sitslab.model import FUSION_WEIGHTS, ModelOutput, Od2rnnModel, StreamFeatures, load_checkpoint, save_checkpoint
from sitslab.numeric import RngStream

OPT = StreamConfig(5, 3, 3, 3, 0.0)
RAD = StreamConfig(2, 3, 3, 3, 0.0)


class _Sample:
    def __init__(self, optical, radar, label=0):
        self.optical, self.radar, self.label = optical, radar, label


def _sample(s: RngStream, t_opt=4, t_rad=3, label=0) -> _Sample:
    return _Sample(s.uniform(0, 1, (t_opt, 5)), s.uniform(0, 1, (t_rad, 2)), label)


def _perturb_biases(model: Od2rnnModel, s: RngStream) -> None:
    # random biases so every bias gradient is exercised
    for name, p in model.parameters().items():
        if name.endswith(".b") or ".b_" in name:
            p[:] = s.normal(0.3, p.shape)


def test_end_to_end_loss_gradients_two_classes():
    for i in range(20):
        s = RngStream(600 + i)
        model = Od2rnnModel(OPT, RAD, 2, s.substream("init"))
        _perturb_biases(model, s)
        sample = _sample(s, label=i % 2)

        def f():
            return model.loss(model.forward(sample, "eval"), sample.label).total

        f()
        grads = model.backward(sample.label)
        assert set(grads) == set(model.parameters())
        for name, p in model.parameters().items():
            err = relative_error(grads[name], numerical_gradient(f, p))
            assert err <= 1e-4, f"{name}: relative error {err:.2e}"


@pytest.mark.parametrize("sources", ["optical", "radar"])
def test_single_source_gradients(sources):
    s = RngStream(700)
    model = Od2rnnModel(OPT, RAD, 3, s.substream("init"), sources=sources)
    _perturb_biases(model, s)
    sample = _sample(s, label=2)

    def f():
        return model.loss(model.forward(sample, "eval"), 2).total

    f()
    grads = model.backward(2)
    for name, p in model.parameters().items():
        assert relative_error(grads[name], numerical_gradient(f, p)) <= 1e-4, name


def test_total_loss_is_weighted_sum():
    model = Od2rnnModel.zeros(OPT, RAD, 5)
    s = RngStream(11)
    for _ in range(1000):
        logits = {k: s.normal(4.0, 5) for k in ("radar", "optical", "fusion")}
        out = ModelOutput(StreamFeatures(None, None), logits)
        c = int(s.integers(0, 5))
        parts = model.loss(out, c)
        expected = 0.5 * parts.radar + 0.5 * parts.optical + parts.fusion
        assert parts.total == pytest.approx(expected, rel=1e-15, abs=1e-15)


def test_single_source_loss_has_unit_weight(rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"), sources="optical")
    assert set(model.streams) == {"optical"}
    assert all(k.startswith(("optical.", "classifier_optical.")) for k in model.parameters())
    parts = model.loss(model.forward(_sample(rng)), 1)
    assert parts.total == parts.optical
    assert np.isnan(parts.radar) and np.isnan(parts.fusion)


def test_fusion_input_is_radar_then_optical(rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    out = model.forward(_sample(rng))
    concat = np.concatenate([out.features.radar_feat, out.features.opt_feat])
    clf = model.classifiers["fusion"]
    np.testing.assert_allclose(out.logits_fusion, clf.W @ concat + clf.b)


def test_zero_model_predicts_uniform_lowest_index(rng):
    model = Od2rnnModel.zeros(OPT, RAD, 4)
    c, probs = model.predict(_sample(rng))
    assert c == 0
    np.testing.assert_allclose(probs, 0.25)


def test_prediction_mixes_softmaxes(rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    sample = _sample(rng)
    _, probs = model.predict(sample)
    out = model.forward(sample)
    assert probs.sum() == pytest.approx(1.0)
    mix = sum(FUSION_WEIGHTS[k] * np.exp(v) / np.exp(v).sum() for k, v in out.logits.items()) / 2.0
    np.testing.assert_allclose(probs, mix)


def test_combined_prediction_hand_example():
    model = Od2rnnModel.zeros(OPT, RAD, 2)
    sure = np.array([50.0, -50.0])
    out = ModelOutput(StreamFeatures(None, None), {"radar": sure, "optical": sure, "fusion": np.zeros(2)})
    # (0.5 + 0.5 + 0.5, 0.5) / 2
    np.testing.assert_allclose(model.combine(out), [0.75, 0.25], atol=1e-12)


@pytest.mark.parametrize("shifted", ["radar", "optical", "fusion"])
def test_combined_prediction_ignores_logit_offsets(rng, shifted):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    out = model.forward(_sample(rng))
    logits = dict(out.logits)
    logits[shifted] = logits[shifted] + 7.5
    moved = ModelOutput(out.features, logits)
    np.testing.assert_allclose(model.combine(moved), model.combine(out), rtol=1e-12)


def test_optical_logits_ignore_the_radar_series(rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    sample = _sample(rng)
    before = model.forward(sample).logits_optical.copy()
    blanked = _Sample(sample.optical, np.zeros_like(sample.radar))
    np.testing.assert_array_equal(model.forward(blanked).logits_optical, before)


def test_gradients_vanish_when_every_classifier_is_certain(rng):
    model = Od2rnnModel(OPT, RAD, 2, rng.substream("init"))
    for clf in model.classifiers.values():
        clf.b[:] = [100.0, -100.0]
    out = model.forward(_sample(rng))
    assert model.loss(out, 0).total < 1e-60
    for name, g in model.backward(0).items():
        assert np.abs(g).max() < 1e-30, name


def test_attention_weights_exposed(rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    out = model.forward(_sample(rng, t_opt=6, t_rad=4))
    assert out.attention["optical"].shape == (6,)
    assert out.attention["radar"].shape == (4,)
    for w in out.attention.values():
        assert w.sum() == pytest.approx(1.0, abs=1e-9)


def test_train_mode_dropout_draws_fresh_masks():
    cfg_o, cfg_r = StreamConfig(5, 6, 6, 4, 0.5), StreamConfig(2, 6, 6, 4, 0.5)
    model = Od2rnnModel(cfg_o, cfg_r, 3, RngStream(1).substream("init"))
    sample = _sample(RngStream(2))
    drop = RngStream(3)
    a = model.forward(sample, "train", drop).logits_fusion
    b = model.forward(sample, "train", drop).logits_fusion
    assert not np.allclose(a, b)
    np.testing.assert_array_equal(model.forward(sample).logits_fusion, model.forward(sample).logits_fusion)


def test_errors(rng):
    with pytest.raises(ArgumentError):
        Od2rnnModel(OPT, RAD, 1, rng)
    with pytest.raises(ArgumentError):
        Od2rnnModel(OPT, RAD, 3, rng, sources="lidar")
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    with pytest.raises(StateError):
        model.backward(0)
    with pytest.raises(ShapeError):
        model.forward(_Sample(np.zeros((4, 4)), np.zeros((3, 2))))
    with pytest.raises(ArgumentError):
        model.loss(model.forward(_sample(rng)), 3)


def test_checkpoint_round_trip(tmp_path, rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"), class_names=["a", "b", "c"])
    path = save_checkpoint(model, tmp_path / "m.npz", seed=5)
    loaded, meta = load_checkpoint(path)
    assert meta["seed"] == 5 and meta["sources"] == "both"
    assert loaded.class_names == ["a", "b", "c"]
    sample = _sample(rng)
    np.testing.assert_array_equal(loaded.predict(sample)[1], model.predict(sample)[1])


def test_checkpoint_rejects_bad_version_and_shapes(tmp_path, rng):
    model = Od2rnnModel(OPT, RAD, 3, rng.substream("init"))
    path = save_checkpoint(model, tmp_path / "m.npz")
    with np.load(path) as npz:
        arrays = {k: npz[k] for k in npz.files}
    meta = json.loads(str(arrays.pop("__meta__")))

    bad = tmp_path / "bad_version.npz"
    np.savez(bad, __meta__=np.array(json.dumps({**meta, "format_version": 99})), **arrays)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad)

    arrays["radar.fc1.W"] = np.zeros((7, 7))
    bad = tmp_path / "bad_shape.npz"
    np.savez(bad, __meta__=np.array(json.dumps(meta)), **arrays)
    with pytest.raises(CheckpointError, match="radar.fc1.W"):
        load_checkpoint(bad)
