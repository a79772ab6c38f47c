"""Acceptance experiments on the default synthetic dataset (desk preset).

  1. Overfit sanity: 32 training objects are memorized within 200 epochs.
  2. Fusion beats single-source models by at least 5 accuracy points and
     exceeds 90% overall; each single-source model stays below 60% F on the
     class pair its sensor cannot see.
  3. Random Forest on both sources beats the optical-only forest on the
     optical-blind pair.
  4. Overall ordering: OD2RNN above RF(S2) above RF(S1).

Run with ``pytest -m slow``.
"""

from __future__ import annotations

from dataclasses import replace

import numpy as np
import pytest

from sitslab.config import PRESETS, SplitSpec, SynthSpec
from sitslab.data import DatasetSplit
from sitslab.metrics import aggregate
from sitslab.numeric import RngStream
from sitslab.optim import evaluate_accuracy, train
from sitslab.pipeline import build_model, compare_methods
from sitslab.preprocess import preprocess
from sitslab.synth import generate_synthetic

pytestmark = pytest.mark.slow

DESK = PRESETS["desk"]
SPEC = SynthSpec()
# (0, 1) share optical profiles, (2, 3) share radar profiles
OPTICAL_BLIND = list(SPEC.confusable_pairs[0])
RADAR_BLIND = list(SPEC.confusable_pairs[1])


@pytest.fixture(scope="module")
def default_ready():
    return preprocess(generate_synthetic(SPEC, RngStream(0).substream("synth")))


@pytest.fixture(scope="module")
def five_split_results(default_ready):
    methods = ("RF(S1)", "RF(S2)", "RF(S1,S2)", "OD2RNN", "OD2RNN(S1)", "OD2RNN(S2)")
    results = compare_methods(default_ready, SplitSpec(seed=0, repeats=5), DESK, seed=0, methods=methods)
    return {m: aggregate([r.report for r in rs]) for m, rs in results.items()}


def test_overfits_32_objects(default_ready):
    s = RngStream(1)
    idx = np.sort(s.permutation(len(default_ready))[:32])
    sub = default_ready.subset(idx)
    part = DatasetSplit(sub, sub, sub)
    model = build_model(DESK, sub, seed=1)
    model, _ = train(model, part, replace(DESK.train, epochs=200, log_every=50))
    assert evaluate_accuracy(model, sub) == 1.0


def test_fusion_beats_single_sources(five_split_results):
    fusion = five_split_results["OD2RNN"].mean.accuracy
    radar_only = five_split_results["OD2RNN(S1)"].mean.accuracy
    optical_only = five_split_results["OD2RNN(S2)"].mean.accuracy
    assert fusion > 0.90
    assert fusion >= radar_only + 0.05
    assert fusion >= optical_only + 0.05


def test_single_sources_are_blind_on_their_pair(five_split_results):
    optical_only = five_split_results["OD2RNN(S2)"].mean.per_class_f
    radar_only = five_split_results["OD2RNN(S1)"].mean.per_class_f
    assert (optical_only[OPTICAL_BLIND] < 0.60).all()
    assert (radar_only[RADAR_BLIND] < 0.60).all()


def test_forest_gains_from_radar_on_optical_blind_pair(five_split_results):
    both = five_split_results["RF(S1,S2)"].mean.per_class_f[OPTICAL_BLIND]
    optical = five_split_results["RF(S2)"].mean.per_class_f[OPTICAL_BLIND]
    assert both.mean() > optical.mean()


def test_method_ordering(five_split_results):
    acc = {m: five_split_results[m].mean.accuracy for m in ("RF(S1)", "RF(S2)", "OD2RNN")}
    assert acc["OD2RNN"] > acc["RF(S2)"] > acc["RF(S1)"]
