# sitslab/preprocess.py
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .data import ObjectSample, SitsDataset
from .errors import DataError, ShapeError

log = logging.getLogger(__name__)

__all__ = ["gapfill", "gapfill_dataset", "compute_ndvi", "add_ndvi", "BandScaler", "normalize", "preprocess"]


def _date_axis(dates) -> np.ndarray:
    return np.array([d.toordinal() if hasattr(d, "toordinal") else d for d in dates], dtype=np.float64)


def gapfill(series, valid, dates) -> np.ndarray:
    """Linear interpolation in date coordinates over invalid entries.

    Leading/trailing gaps copy the nearest valid value; valid entries are
    returned untouched.
    """
    series = np.asarray(series, dtype=np.float64)
    valid = np.asarray(valid, dtype=bool)
    x = _date_axis(dates)
    if not (series.shape == valid.shape == x.shape):
        raise ShapeError(f"gapfill: series {series.shape}, mask {valid.shape}, dates {x.shape}")
    if not valid.any():
        raise DataError("gapfill: series has no valid observation")
    out = np.interp(x, x[valid], series[valid])
    out[valid] = series[valid]
    return out


def gapfill_dataset(ds: SitsDataset) -> SitsDataset:
    samples = []
    for s in ds.samples:
        if s.optical_valid.all():
            samples.append(s)
            continue
        if not s.optical_valid.any():
            raise DataError(f"object {s.object_id}: every optical date is cloudy, cannot gap-fill")
        filled = np.column_stack([gapfill(s.optical[:, b], s.optical_valid, ds.optical_dates)
                                  for b in range(s.optical.shape[1])])
        samples.append(s.replace(optical=filled))
    return ds.with_samples(samples)


def compute_ndvi(red, nir) -> np.ndarray:
    """(nir - red) / (nir + red), 0 where both reflectances are 0."""
    red, nir = np.asarray(red, dtype=np.float64), np.asarray(nir, dtype=np.float64)
    if red.shape != nir.shape:
        raise ShapeError(f"compute_ndvi: red {red.shape} vs nir {nir.shape}")
    if (red < 0).any() or (nir < 0).any():
        raise DataError("compute_ndvi: negative reflectance")
    denom = nir + red
    return np.divide(nir - red, denom, out=np.zeros_like(denom), where=denom != 0)


def add_ndvi(ds: SitsDataset, red: str = "B4", nir: str = "B8") -> SitsDataset:
    """Append an NDVI column to every optical series unless one is present."""
    if "NDVI" in ds.optical_bands:
        return ds
    try:
        ir, inir = ds.optical_bands.index(red), ds.optical_bands.index(nir)
    except ValueError:
        raise DataError(f"NDVI needs bands {red} and {nir}, dataset has {ds.optical_bands}") from None
    samples = []
    for s in ds.samples:
        try:
            ndvi = compute_ndvi(s.optical[:, ir], s.optical[:, inir])
        except DataError as e:
            raise DataError(f"object {s.object_id}: {e}") from e
        samples.append(s.replace(optical=np.column_stack([s.optical, ndvi])))
    return ds.with_samples(samples, optical_bands=[*ds.optical_bands, "NDVI"])


@dataclass
class BandScaler:
    """Per-band min/max over all objects and dates of one dataset."""
    optical_min: np.ndarray
    optical_max: np.ndarray
    radar_min: np.ndarray
    radar_max: np.ndarray

    @classmethod
    def fit(cls, ds: SitsDataset) -> "BandScaler":
        opt = np.concatenate([s.optical for s in ds.samples])
        rad = np.concatenate([s.radar for s in ds.samples])
        if not (np.isfinite(opt).all() and np.isfinite(rad).all()):
            raise DataError("normalize: non-finite values in input")
        scaler = cls(opt.min(axis=0), opt.max(axis=0), rad.min(axis=0), rad.max(axis=0))
        for kind, bands, lo, hi in (("optical", ds.optical_bands, scaler.optical_min, scaler.optical_max),
                                    ("radar", ds.radar_bands, scaler.radar_min, scaler.radar_max)):
            for name in np.asarray(bands)[lo == hi]:
                log.warning("%s band %s is constant; it maps to 0", kind, name)
        return scaler

    @staticmethod
    def _scale(x: np.ndarray, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        span = hi - lo
        out = np.divide(x - lo, span, out=np.zeros_like(x), where=span > 0)
        return np.clip(out, 0.0, 1.0)

    def transform(self, ds: SitsDataset) -> SitsDataset:
        if len(self.optical_min) != len(ds.optical_bands) or len(self.radar_min) != len(ds.radar_bands):
            raise ShapeError(f"scaler fitted on {len(self.optical_min)}+{len(self.radar_min)} bands, "
                             f"dataset has {len(ds.optical_bands)}+{len(ds.radar_bands)}")
        samples = []
        for s in ds.samples:
            if not (np.isfinite(s.optical).all() and np.isfinite(s.radar).all()):
                raise DataError(f"normalize: object {s.object_id} has non-finite values")
            samples.append(s.replace(optical=self._scale(s.optical, self.optical_min, self.optical_max),
                                     radar=self._scale(s.radar, self.radar_min, self.radar_max)))
        return ds.with_samples(samples, scaler=self)

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("optical_min", "optical_max", "radar_min", "radar_max")}

    @classmethod
    def from_dict(cls, d: dict) -> "BandScaler":
        return cls(**{k: np.asarray(d[k], dtype=np.float64)
                      for k in ("optical_min", "optical_max", "radar_min", "radar_max")})


def normalize(ds: SitsDataset, scaler: BandScaler | None = None) -> SitsDataset:
    """Min-max scale every band to [0, 1]; the scaler used is attached to the result."""
    return (scaler or BandScaler.fit(ds)).transform(ds)


def preprocess(ds: SitsDataset, scaler: BandScaler | None = None) -> SitsDataset:
    """gap-fill → NDVI → normalize."""
    return normalize(add_ndvi(gapfill_dataset(ds)), scaler)
