# sitslab/config.py
from __future__ import annotations

import logging
import math
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .errors import ArgumentError, ConfigError

log = logging.getLogger(__name__)

__all__ = [
    "StreamConfig", "TrainConfig", "SplitSpec", "SynthSpec", "ForestConfig", "Preset",
    "PRESETS", "get_preset", "apply_overrides", "load_config_file", "MAX_DATES",
]


@dataclass(frozen=True)
class StreamConfig:
    input_bands: int
    fc1_units: int
    fc2_units: int
    hidden_units: int
    dropout_rate: float = 0.4

    def __post_init__(self):
        for name in ("input_bands", "fc1_units", "fc2_units", "hidden_units"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"StreamConfig.{name} must be >= 1, got {getattr(self, name)}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ArgumentError(f"StreamConfig.dropout_rate must lie in [0, 1), got {self.dropout_rate}")


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 1000
    batch_size: int = 32
    learning_rate: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    seed: int = 0
    checkpoint_path: str | None = None
    preset: str = "paper"
    log_every: int = 10

    def __post_init__(self):
        if self.epochs < 1: raise ArgumentError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1: raise ArgumentError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0: raise ArgumentError(f"learning_rate must be > 0, got {self.learning_rate}")


@dataclass(frozen=True)
class SplitSpec:
    train: float = 0.5
    validation: float = 0.2
    test: float = 0.3
    seed: int = 0
    repeats: int = 10

    def __post_init__(self):
        fr = (self.train, self.validation, self.test)
        if min(fr) <= 0 or not math.isclose(sum(fr), 1.0, abs_tol=1e-9):
            raise ArgumentError(f"split fractions must be positive and sum to 1, got {fr}")
        if self.repeats < 1:
            raise ArgumentError(f"repeats must be >= 1, got {self.repeats}")


# synthetic dates are whole days within one year
MAX_DATES = 365


@dataclass(frozen=True)
class SynthSpec:
    num_classes: int = 8
    samples_per_class: int = 75
    t_opt: int = 20
    t_rad: int = 12
    noise_sigma: float = 0.05
    cloud_rate: float = 0.2
    # the last `radar_blind_pairs` pairs share radar profiles, the others share optical ones
    confusable_pairs: tuple[tuple[int, int], ...] = ((0, 1), (2, 3))
    radar_blind_pairs: int = 1
    # radar noise is noise_sigma * radar_noise_factor (speckle); 1.0 gives both sensors the same noise
    radar_noise_factor: float = 2.0
    start_date: str = "2016-04-01"
    name: str = "synthetic"

    def __post_init__(self):
        if self.num_classes < 2: raise ArgumentError(f"num_classes must be >= 2, got {self.num_classes}")
        if self.samples_per_class < 3: raise ArgumentError(f"samples_per_class must be >= 3, got {self.samples_per_class}")
        if not (2 <= self.t_opt <= MAX_DATES and 2 <= self.t_rad <= MAX_DATES):
            raise ArgumentError(f"t_opt and t_rad must lie in [2, {MAX_DATES}], got {self.t_opt} and {self.t_rad}")
        if self.noise_sigma < 0: raise ArgumentError(f"noise_sigma must be >= 0, got {self.noise_sigma}")
        if self.radar_noise_factor < 0: raise ArgumentError(f"radar_noise_factor must be >= 0, got {self.radar_noise_factor}")
        if not 0.0 <= self.cloud_rate < 1.0: raise ArgumentError(f"cloud_rate must lie in [0, 1), got {self.cloud_rate}")
        seen: set[int] = set()
        for a, b in self.confusable_pairs:
            if a == b or not (0 <= a < self.num_classes and 0 <= b < self.num_classes):
                raise ArgumentError(f"invalid confusable pair ({a}, {b}) for {self.num_classes} classes")
            if a in seen or b in seen:
                raise ArgumentError(f"class appears in more than one confusable pair: ({a}, {b})")
            seen.update((a, b))
        if not 0 <= self.radar_blind_pairs <= len(self.confusable_pairs):
            raise ArgumentError("radar_blind_pairs exceeds the number of confusable pairs")


@dataclass(frozen=True)
class ForestConfig:
    num_trees: int = 100
    max_depth: int = 20
    features_per_split: int | None = None  # None -> ceil(sqrt(num_features))
    bootstrap: bool = True
    seed: int = 0
    n_jobs: int = 1

    def __post_init__(self):
        if self.num_trees < 1 or self.max_depth < 1:
            raise ArgumentError(f"num_trees and max_depth must be >= 1, got {self.num_trees}, {self.max_depth}")
        if self.features_per_split is not None and self.features_per_split < 1:
            raise ArgumentError(f"features_per_split must be >= 1, got {self.features_per_split}")

    def features_for(self, num_features: int) -> int:
        k = self.features_per_split or math.ceil(math.sqrt(num_features))
        return min(k, num_features)


@dataclass(frozen=True)
class Preset:
    name: str
    optical: StreamConfig
    radar: StreamConfig
    train: TrainConfig
    rf_trees: tuple[int, ...]
    rf_depths: tuple[int, ...]

    def snapshot(self) -> dict:
        return asdict(self)


PRESETS: dict[str, Preset] = {
    "paper": Preset(
        name="paper",
        optical=StreamConfig(5, 32, 64, 1024, 0.4),
        radar=StreamConfig(2, 32, 64, 512, 0.4),
        train=TrainConfig(epochs=1000, batch_size=32, learning_rate=1e-4, preset="paper"),
        rf_trees=(100, 200, 300, 400, 500),
        rf_depths=(20, 40, 60, 80, 100),
    ),
    "desk": Preset(
        name="desk",
        optical=StreamConfig(5, 8, 16, 64, 0.2),
        radar=StreamConfig(2, 8, 16, 32, 0.2),
        train=TrainConfig(epochs=40, batch_size=32, learning_rate=5e-3, preset="desk", log_every=5),
        rf_trees=(50, 100),
        rf_depths=(10, 20),
    ),
}


def get_preset(name: str) -> Preset:
    try:
        return PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset '{name}' (choose from {sorted(PRESETS)})") from None


# ------------------------------- OVERRIDES -------------------------------

# flat override key -> (section, field); section "both" touches both streams
_OVERRIDE_FIELDS = {
    "epochs": ("train", "epochs"),
    "batch_size": ("train", "batch_size"),
    "learning_rate": ("train", "learning_rate"),
    "log_every": ("train", "log_every"),
    "optical_hidden": ("optical", "hidden_units"),
    "radar_hidden": ("radar", "hidden_units"),
    "fc1_units": ("both", "fc1_units"),
    "fc2_units": ("both", "fc2_units"),
    "dropout": ("both", "dropout_rate"),
    "rf_trees": ("preset", "rf_trees"),
    "rf_depths": ("preset", "rf_depths"),
}
OVERRIDE_KEYS = frozenset(_OVERRIDE_FIELDS)


def apply_overrides(preset: Preset, overrides: dict) -> tuple[Preset, list[str]]:
    """Return ``(new_preset, deviations)``; ``None`` values are ignored."""
    deviations: list[str] = []
    optical, radar, train, top = preset.optical, preset.radar, preset.train, {}
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in _OVERRIDE_FIELDS:
            raise ConfigError(f"unknown override '{key}'")
        section, fld = _OVERRIDE_FIELDS[key]
        if section == "train":
            old, train = getattr(train, fld), replace(train, **{fld: value})
        elif section == "optical":
            old, optical = getattr(optical, fld), replace(optical, **{fld: value})
        elif section == "radar":
            old, radar = getattr(radar, fld), replace(radar, **{fld: value})
        elif section == "both":
            old = getattr(optical, fld)
            optical, radar = replace(optical, **{fld: value}), replace(radar, **{fld: value})
        else:
            value = tuple(value)
            old, top[fld] = getattr(preset, fld), value
        if old != value:
            deviations.append(f"{key}: {old!r} -> {value!r}")
    for d in deviations:
        log.warning("deviation from preset '%s': %s", preset.name, d)
    return replace(preset, optical=optical, radar=radar, train=train, **top), deviations


def load_config_file(path: str | Path) -> dict:
    """Read a flat TOML key/value file whose keys mirror the CLI flags."""
    path = Path(path)
    with path.open("rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"{path}: {e}") from e
    out = {}
    for key, value in raw.items():
        if isinstance(value, dict):
            raise ConfigError(f"{path}: nested table '{key}' is not supported, use flat keys")
        out[key.replace("-", "_")] = value
    return out
