from __future__ import annotations

import logging
from datetime import date, timedelta

import numpy as np

from .config import SynthSpec
from .data import ObjectSample, SitsDataset
from .numeric import RngStream

log = logging.getLogger(__name__)

__all__ = ["SynthSpec", "generate_synthetic", "OPTICAL_BANDS", "RADAR_BANDS"]

OPTICAL_BANDS = ["B2", "B3", "B4", "B8"]
RADAR_BANDS = ["VV", "VH"]

_OPT_BASE = np.array([0.10, 0.12, 0.10, 0.30])
_OPT_SPREAD = 0.30
_RAD_BASE = np.array([0.30, 0.15])
_RAD_SPREAD = 0.25
_YEAR = 365.0


def _dates(start: date, n: int, offset: int = 0) -> list[date]:
    step = _YEAR / n
    return [start + timedelta(days=offset + int(round(i * step))) for i in range(n)]


def _profiles(days: np.ndarray, level: np.ndarray, amp: np.ndarray, phase: np.ndarray) -> np.ndarray:
    # (C, T, B): class level plus a yearly phenology cycle
    wave = np.sin(2 * np.pi * days[None, :, None] / _YEAR + phase[:, None, None])
    return level[:, None, :] + amp[:, None, :] * wave


def generate_synthetic(spec: SynthSpec, stream: RngStream) -> SitsDataset:
    """Raw (not preprocessed) dataset: 4 optical bands with cloud mask, VV/VH radar.

    Each class gets its own levels, amplitudes and phase per sensor. Optical-blind
    pairs share the optical profile and get strongly different radar ones;
    radar-blind pairs the other way round.
    """
    C = spec.num_classes
    prof = stream.substream("profiles")

    opt_level = _OPT_BASE + _OPT_SPREAD * np.column_stack([prof.permutation(C) for _ in OPTICAL_BANDS]) / (C - 1)
    opt_amp = prof.uniform(0.02, 0.06, (C, len(OPTICAL_BANDS)))
    opt_amp[:, 3] *= 2.0  # NIR follows the vegetation cycle most
    opt_phase = 2 * np.pi * np.arange(C) / C + prof.uniform(0.0, 0.3, C)

    rad_level = _RAD_BASE + _RAD_SPREAD * np.column_stack([prof.permutation(C) for _ in RADAR_BANDS]) / (C - 1)
    rad_amp = prof.uniform(0.01, 0.05, (C, len(RADAR_BANDS)))
    rad_phase = 2 * np.pi * prof.permutation(C) / C

    n_opt_blind = len(spec.confusable_pairs) - spec.radar_blind_pairs
    for k, (a, b) in enumerate(spec.confusable_pairs):
        if k < n_opt_blind:
            opt_level[b], opt_amp[b], opt_phase[b] = opt_level[a], opt_amp[a], opt_phase[a]
            # radar must carry the whole distinction
            rad_level[b] = np.where(rad_level[a] < 0.4, rad_level[a] + 0.2, rad_level[a] - 0.2)
            rad_amp[a], rad_amp[b] = 0.08, 0.08
            rad_phase[b] = rad_phase[a] + np.pi
        else:
            rad_level[b], rad_amp[b], rad_phase[b] = rad_level[a], rad_amp[a], rad_phase[a]
            opt_level[b, 3] = np.where(opt_level[a, 3] < 0.45, opt_level[a, 3] + 0.15, opt_level[a, 3] - 0.15)
            opt_phase[b] = opt_phase[a] + np.pi / 2

    start = date.fromisoformat(spec.start_date)
    optical_dates = _dates(start, spec.t_opt)
    radar_dates = _dates(start, spec.t_rad, offset=3)
    opt_days = np.array([(d - start).days for d in optical_dates], dtype=float)
    rad_days = np.array([(d - start).days for d in radar_dates], dtype=float)
    opt_prof = _profiles(opt_days, opt_level, opt_amp, opt_phase)
    rad_prof = _profiles(rad_days, rad_level, rad_amp, rad_phase)

    noise, clouds = stream.substream("noise"), stream.substream("clouds")
    samples = []
    for c in range(C):
        for _ in range(spec.samples_per_class):
            optical = opt_prof[c] + noise.normal(spec.noise_sigma, opt_prof[c].shape) if spec.noise_sigma else opt_prof[c].copy()
            radar = (rad_prof[c] + noise.normal(spec.noise_sigma * spec.radar_noise_factor, rad_prof[c].shape)
                     if spec.noise_sigma else rad_prof[c].copy())
            valid = clouds.random(spec.t_opt) >= spec.cloud_rate
            if not valid.any():
                valid[clouds.integers(0, spec.t_opt)] = True
            n_cloudy = int((~valid).sum())
            if n_cloudy:
                optical[~valid] = clouds.uniform(0.6, 0.8, (n_cloudy, 1))  # bright, flat cloud signature
            samples.append(ObjectSample(f"obj{len(samples):05d}", c, np.clip(optical, 0.0, 1.0),
                                        np.clip(radar, 0.0, 1.0), valid))

    ds = SitsDataset(samples, optical_dates, radar_dates, [f"class_{c}" for c in range(C)],
                     list(OPTICAL_BANDS), list(RADAR_BANDS), name=spec.name)
    log.info("synthesized %d objects (%d classes, %d optical / %d radar dates, sigma=%.3g, clouds=%.2f)",
             len(ds), C, spec.t_opt, spec.t_rad, spec.noise_sigma, spec.cloud_rate)
    return ds
