"""config: presets, overrides with deviations, TOML files."""

from __future__ import annotations

import pytest

from sitslab.config import (
    PRESETS,
    ForestConfig,
    SplitSpec,
    StreamConfig,
    SynthSpec,
    apply_overrides,
    get_preset,
    load_config_file,
)
from sitslab.errors import ArgumentError, ConfigError


def test_paper_preset_values():
    p = get_preset("paper")
    assert (p.optical.hidden_units, p.radar.hidden_units) == (1024, 512)
    assert (p.optical.fc1_units, p.optical.fc2_units) == (32, 64)
    assert p.optical.dropout_rate == 0.4
    assert (p.train.epochs, p.train.batch_size, p.train.learning_rate) == (1000, 32, 1e-4)
    assert p.rf_trees == (100, 200, 300, 400, 500) and p.rf_depths == (20, 40, 60, 80, 100)
    assert p.snapshot()["optical"]["hidden_units"] == 1024


def test_unknown_preset():
    with pytest.raises(ConfigError, match="desk"):
        get_preset("laptop")


def test_overrides_record_deviations():
    preset, deviations = apply_overrides(PRESETS["desk"], {"epochs": 3, "fc1_units": 4, "rf_trees": [5],
                                                           "dropout": None, "batch_size": 32})
    assert preset.train.epochs == 3
    assert preset.optical.fc1_units == preset.radar.fc1_units == 4
    assert preset.rf_trees == (5,)
    assert deviations == ["epochs: 40 -> 3", "fc1_units: 8 -> 4", "rf_trees: (50, 100) -> (5,)"]
    assert PRESETS["desk"].train.epochs == 40


def test_overrides_reject_unknown_and_invalid():
    with pytest.raises(ConfigError):
        apply_overrides(PRESETS["desk"], {"momentum": 0.9})
    with pytest.raises(ArgumentError):
        apply_overrides(PRESETS["desk"], {"dropout": 1.5})


def test_load_config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 3\nlearning-rate = 0.01\nrf_trees = [5, 10]\n')
    assert load_config_file(path) == {"seed": 3, "learning_rate": 0.01, "rf_trees": [5, 10]}
    path.write_text("[model]\nepochs = 2\n")
    with pytest.raises(ConfigError, match="nested"):
        load_config_file(path)
    path.write_text("seed = \n")
    with pytest.raises(ConfigError):
        load_config_file(path)


@pytest.mark.parametrize("factory", [
    lambda: StreamConfig(0, 1, 1, 1),
    lambda: SplitSpec(0.5, 0.5, 0.5),
    lambda: SynthSpec(num_classes=1),
    lambda: SynthSpec(confusable_pairs=((0, 1), (1, 2))),
    lambda: SynthSpec(t_opt=1),
    lambda: SynthSpec(t_rad=366),
    lambda: SynthSpec(radar_noise_factor=-1.0),
    lambda: ForestConfig(num_trees=0),
])
def test_invalid_configs(factory):
    with pytest.raises(ArgumentError):
        factory()


def test_features_per_split_default():
    assert ForestConfig().features_for(100) == 10
    assert ForestConfig().features_for(10) == 4
    assert ForestConfig(features_per_split=50).features_for(10) == 10
