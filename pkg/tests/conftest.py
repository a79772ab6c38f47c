"""Shared fixtures: small synthetic datasets and tiny stream configurations."""

from __future__ import annotations

import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import pytest

from sitslab.config import StreamConfig, SynthSpec
from sitslab.data import save_dataset
from sitslab.numeric import RngStream
from sitslab.preprocess import preprocess
from sitslab.synth import generate_synthetic

# 4 classes, short series: enough structure for every module, fast to train on
SMALL_SPEC = SynthSpec(num_classes=4, samples_per_class=12, t_opt=8, t_rad=6, name="small")


@pytest.fixture
def rng() -> RngStream:
    return RngStream(1234)


@pytest.fixture(scope="session")
def small_raw():
    return generate_synthetic(SMALL_SPEC, RngStream(7).substream("synth"))


@pytest.fixture(scope="session")
def small_ready(small_raw):
    return preprocess(small_raw)


@pytest.fixture
def dataset_dir(tmp_path, small_raw):
    """Manifest path of the small dataset written to disk."""
    return save_dataset(small_raw, tmp_path / "data")


@pytest.fixture
def tiny_streams() -> tuple[StreamConfig, StreamConfig]:
    """(optical, radar) configs matching preprocessed data: 5 optical bands incl. NDVI, 2 radar."""
    return StreamConfig(5, 4, 5, 6, 0.0), StreamConfig(2, 3, 4, 5, 0.0)
