# sitslab/data.py: object-level SITS dataset model, file I/O and split protocol
from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from datetime import date
from pathlib import Path
from typing import TYPE_CHECKING, Any

import numpy as np
import pandas as pd

from .config import SplitSpec
from .errors import DataError, DatasetFormatError
from .numeric import RngStream

if TYPE_CHECKING:
    from .preprocess import BandScaler

log = logging.getLogger(__name__)

__all__ = [
    "ObjectSample", "SitsDataset", "SplitSpec", "DatasetSplit", "load_dataset", "save_dataset",
    "split", "partition_digest", "dataset_digest", "table_columns", "MANIFEST_VERSION",
]

MANIFEST_VERSION = 1


@dataclass(frozen=True, eq=False)
class ObjectSample:
    """One ground-truth object: per-date band means for both sensors."""
    object_id: str
    label: int
    optical: np.ndarray        # (T_opt, B_opt)
    radar: np.ndarray          # (T_rad, B_rad)
    optical_valid: np.ndarray  # (T_opt,) bool, False = cloudy

    def replace(self, **changes) -> "ObjectSample":
        return replace(self, **changes)


@dataclass(eq=False)
class SitsDataset:
    samples: list[ObjectSample]
    optical_dates: list[date]
    radar_dates: list[date]
    class_names: list[str]
    optical_bands: list[str]
    radar_bands: list[str]
    name: str = "dataset"
    scaler: "BandScaler | None" = None

    def __post_init__(self):
        self.validate()

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def num_classes(self) -> int: return len(self.class_names)

    @property
    def t_opt(self) -> int: return len(self.optical_dates)

    @property
    def t_rad(self) -> int: return len(self.radar_dates)

    @property
    def feature_count(self) -> int:
        return self.t_opt * len(self.optical_bands) + self.t_rad * len(self.radar_bands)

    @property
    def labels(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=int)

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def with_samples(self, samples: list[ObjectSample], **changes) -> "SitsDataset":
        return replace(self, samples=list(samples), **changes)

    def subset(self, indices) -> "SitsDataset":
        return self.with_samples([self.samples[i] for i in indices])

    def validate(self) -> None:
        for kind, dates in (("optical", self.optical_dates), ("radar", self.radar_dates)):
            if not dates:
                raise DataError(f"{kind} date list is empty")
            if any(b <= a for a, b in zip(dates, dates[1:])):
                raise DataError(f"{kind} dates are not strictly increasing")
        want_opt = (self.t_opt, len(self.optical_bands))
        want_rad = (self.t_rad, len(self.radar_bands))
        for i, s in enumerate(self.samples):
            if s.optical.shape != want_opt:
                raise DataError(f"object {s.object_id}: optical shape {s.optical.shape} != {want_opt}")
            if s.radar.shape != want_rad:
                raise DataError(f"object {s.object_id}: radar shape {s.radar.shape} != {want_rad}")
            if s.optical_valid.shape != (self.t_opt,):
                raise DataError(f"object {s.object_id}: validity mask length {s.optical_valid.shape} != {self.t_opt}")
            if not 0 <= s.label < self.num_classes:
                raise DataError(f"object {s.object_id}: label {s.label} outside [0, {self.num_classes})")


@dataclass
class DatasetSplit:
    train: SitsDataset
    validation: SitsDataset
    test: SitsDataset
    repeat_index: int = 0
    indices: dict[str, np.ndarray] = field(default_factory=dict)


# ------------------------------ FILE FORMAT ------------------------------

def table_columns(optical_bands, radar_bands, t_opt: int, t_rad: int) -> list[str]:
    cols = ["object_id", "label"]
    cols += [f"S2_{d:03d}_{b}" for d in range(t_opt) for b in optical_bands]
    cols += [f"S1_{d:03d}_{b}" for d in range(t_rad) for b in radar_bands]
    cols += [f"valid_{d:03d}" for d in range(t_opt)]
    return cols


def save_dataset(ds: SitsDataset, out_dir: str | Path, table_name: str = "objects.csv") -> Path:
    """Write ``manifest.json`` plus the wide object table; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    n, to, tr = len(ds), ds.t_opt, ds.t_rad
    cols = table_columns(ds.optical_bands, ds.radar_bands, to, tr)
    frame = pd.DataFrame({"object_id": [s.object_id for s in ds.samples], "label": ds.labels})
    opt = np.stack([s.optical for s in ds.samples]).reshape(n, -1)
    rad = np.stack([s.radar for s in ds.samples]).reshape(n, -1)
    valid = np.stack([s.optical_valid for s in ds.samples]).astype(int)
    frame = pd.concat([frame, pd.DataFrame(np.hstack([opt, rad]), columns=cols[2:2 + opt.shape[1] + rad.shape[1]]),
                       pd.DataFrame(valid, columns=cols[-to:])], axis=1)
    frame.to_csv(out_dir / table_name, index=False, float_format="%.17g", lineterminator="\n")

    manifest = {
        "format_version": MANIFEST_VERSION,
        "name": ds.name,
        "table": table_name,
        "class_names": list(ds.class_names),
        "optical_bands": list(ds.optical_bands),
        "radar_bands": list(ds.radar_bands),
        "optical_dates": [d.isoformat() for d in ds.optical_dates],
        "radar_dates": [d.isoformat() for d in ds.radar_dates],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    log.info("dataset '%s' written to %s (%d objects)", ds.name, out_dir, n)
    return path


def _require(manifest: dict, key: str, kind: type) -> Any:
    if key not in manifest:
        raise DatasetFormatError(f"manifest is missing '{key}'", column=key)
    value = manifest[key]
    if not isinstance(value, kind):
        raise DatasetFormatError(f"manifest '{key}' must be a {kind.__name__}", column=key)
    return value


def _parse_dates(values: list, key: str) -> list[date]:
    try:
        return [date.fromisoformat(v) for v in values]
    except (TypeError, ValueError) as e:
        raise DatasetFormatError(f"bad ISO date in '{key}': {e}", column=key) from e


def load_dataset(manifest_path: str | Path) -> SitsDataset:
    manifest_path = Path(manifest_path)
    with manifest_path.open(encoding="utf-8") as fh:
        try:
            manifest = json.load(fh)
        except json.JSONDecodeError as e:
            raise DatasetFormatError(f"{manifest_path}: invalid JSON ({e.msg})", row=e.lineno) from e
    version = manifest.get("format_version", MANIFEST_VERSION)
    if version != MANIFEST_VERSION:
        raise DatasetFormatError(f"unsupported manifest version {version}", column="format_version")

    class_names = _require(manifest, "class_names", list)
    optical_bands = _require(manifest, "optical_bands", list)
    radar_bands = _require(manifest, "radar_bands", list)
    optical_dates = _parse_dates(_require(manifest, "optical_dates", list), "optical_dates")
    radar_dates = _parse_dates(_require(manifest, "radar_dates", list), "radar_dates")
    table = manifest_path.parent / _require(manifest, "table", str)

    frame = pd.read_csv(table, dtype={"object_id": str}, float_precision="round_trip")
    expected = table_columns(optical_bands, radar_bands, len(optical_dates), len(radar_dates))
    for pos, col in enumerate(expected):
        if pos >= len(frame.columns):
            raise DatasetFormatError(f"{table.name}: missing column", row=0, column=col)
        if frame.columns[pos] != col:
            raise DatasetFormatError(f"{table.name}: expected column '{col}' at position {pos}, found '{frame.columns[pos]}'",
                                     row=0, column=col)
    if len(frame.columns) != len(expected):
        raise DatasetFormatError(f"{table.name}: unexpected extra columns", row=0, column=str(frame.columns[len(expected)]))
    if frame.empty:
        raise DatasetFormatError(f"{table.name}: no objects", row=1)

    numeric = frame[expected[1:]].apply(pd.to_numeric, errors="coerce")
    bad = numeric.isna() | ~np.isfinite(numeric.to_numpy(dtype=float, na_value=np.nan))
    if bad.to_numpy().any():
        r, c = np.argwhere(bad.to_numpy())[0]
        raise DatasetFormatError(f"{table.name}: non-numeric or missing value", row=int(r) + 1, column=expected[1 + c])
    labels = numeric["label"].to_numpy()
    for r, lab in enumerate(labels):
        if lab != int(lab) or not 0 <= lab < len(class_names):
            raise DatasetFormatError(f"{table.name}: label {lab} not in [0, {len(class_names)})", row=r + 1, column="label")
    valid_cols = expected[-len(optical_dates):]
    flags = numeric[valid_cols].to_numpy()
    if not np.isin(flags, (0, 1)).all():
        r, c = np.argwhere(~np.isin(flags, (0, 1)))[0]
        raise DatasetFormatError(f"{table.name}: validity flag must be 0 or 1", row=int(r) + 1, column=valid_cols[c])

    n, to, tr = len(frame), len(optical_dates), len(radar_dates)
    n_opt = to * len(optical_bands)
    values = numeric[expected[2:2 + n_opt + tr * len(radar_bands)]].to_numpy(dtype=np.float64)
    opt = values[:, :n_opt].reshape(n, to, len(optical_bands))
    rad = values[:, n_opt:].reshape(n, tr, len(radar_bands))
    samples = [
        ObjectSample(str(oid), int(labels[i]), opt[i].copy(), rad[i].copy(), flags[i].astype(bool))
        for i, oid in enumerate(frame["object_id"])
    ]
    ds = SitsDataset(samples, optical_dates, radar_dates, list(class_names), list(optical_bands),
                     list(radar_bands), name=manifest.get("name", manifest_path.parent.name))
    log.info("loaded '%s': %d objects, %d classes, %d optical x %d radar dates, %d features",
             ds.name, len(ds), ds.num_classes, ds.t_opt, ds.t_rad, ds.feature_count)
    return ds


def dataset_digest(manifest_path: str | Path) -> str:
    """SHA-256 over the manifest bytes followed by the table bytes."""
    manifest_path = Path(manifest_path)
    h = hashlib.sha256(manifest_path.read_bytes())
    table = json.loads(manifest_path.read_text(encoding="utf-8")).get("table")
    if table:
        h.update((manifest_path.parent / table).read_bytes())
    return h.hexdigest()


# ------------------------------- SPLITTING -------------------------------

# absorbs float error in fraction * n products
_EPS = 1e-9


def _part_sizes(n: int, spec: SplitSpec) -> tuple[int, int, int]:
    want_val, want_test = spec.validation * n, spec.test * n
    n_val, n_test = math.floor(want_val + _EPS), math.floor(want_test + _EPS)
    r_val, r_test = max(want_val - n_val, 0.0), max(want_test - n_test, 0.0)
    # leftovers go to train unless that pushes train more than one sample over its share
    if r_val + r_test > 1.0 + _EPS:
        if r_val >= r_test: n_val += 1
        else: n_test += 1
    n_val, n_test = max(1, n_val), max(1, n_test)
    return n - n_val - n_test, n_val, n_test


def split(ds: SitsDataset, spec: SplitSpec, repeat_index: int = 0) -> DatasetSplit:
    """Stratified train/validation/test partition, deterministic in (seed, repeat_index)."""
    counts = ds.class_counts()
    small = [ds.class_names[c] for c in range(ds.num_classes) if 0 < counts[c] < 3]
    if small:
        raise DataError(f"classes with fewer than 3 objects cannot be split: {small}")
    rng = RngStream(spec.seed).substream("split", repeat_index)
    labels = ds.labels
    parts: dict[str, list[int]] = {"train": [], "validation": [], "test": []}
    for c in range(ds.num_classes):
        idx = np.flatnonzero(labels == c)
        if idx.size == 0:
            continue
        idx = idx[rng.permutation(idx.size)]
        n_tr, n_val, _ = _part_sizes(idx.size, spec)
        parts["train"] += idx[:n_tr].tolist()
        parts["validation"] += idx[n_tr:n_tr + n_val].tolist()
        parts["test"] += idx[n_tr + n_val:].tolist()
    indices = {k: np.array(sorted(v), dtype=int) for k, v in parts.items()}
    return DatasetSplit(ds.subset(indices["train"]), ds.subset(indices["validation"]), ds.subset(indices["test"]),
                        repeat_index, indices)


def partition_digest(part: DatasetSplit) -> str:
    h = hashlib.sha256()
    for name in ("train", "validation", "test"):
        h.update(name.encode())
        h.update(",".join(s.object_id for s in getattr(part, name).samples).encode())
    return h.hexdigest()[:16]
