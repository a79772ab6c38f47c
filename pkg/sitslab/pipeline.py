# sitslab/pipeline.py
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import pandas as pd

from .config import ForestConfig, Preset, SplitSpec
from .data import DatasetSplit, SitsDataset, dataset_digest, load_dataset, partition_digest, split
from .errors import CheckpointError
from .forest import feature_matrix, grid_search
from .metrics import ConfusionMatrix, EvaluationReport, evaluate
from .model import Od2rnnModel
from .numeric import RngStream
from .optim import predict_dataset, train
from .preprocess import BandScaler, preprocess

log = logging.getLogger(__name__)

__all__ = [
    "PreparedData", "SplitResult", "METHODS", "TABLE_METHODS", "ABLATION_METHODS", "method_slug", "rf_label", "prepare", "build_model", "evaluate_model",
    "run_od2rnn", "run_forest", "run_method", "iter_splits", "compare_methods",
]

# display label -> (kind, source)
METHODS = {
    "RF(S1)": ("rf", "S1"),
    "RF(S2)": ("rf", "S2"),
    "RF(S1,S2)": ("rf", "S1S2"),
    "OD2RNN": ("od2rnn", "both"),
    "OD2RNN(S1)": ("od2rnn", "radar"),
    "OD2RNN(S2)": ("od2rnn", "optical"),
}
TABLE_METHODS = ("RF(S1)", "RF(S2)", "RF(S1,S2)", "OD2RNN")
ABLATION_METHODS = ("OD2RNN(S1)", "OD2RNN(S2)")


def method_slug(label: str) -> str:
    """``RF(S1,S2)`` → ``rf_s1s2``; used for report file names."""
    return label.lower().replace("(", "_").replace(",", "").replace(")", "")


def rf_label(source: str) -> str:
    return {"S1": "RF(S1)", "S2": "RF(S2)", "S1S2": "RF(S1,S2)"}[source]


@dataclass
class PreparedData:
    raw: SitsDataset
    ready: SitsDataset
    digest: str
    manifest_path: Path


@dataclass
class SplitResult:
    method: str
    repeat_index: int
    report: EvaluationReport
    partition: str
    history: pd.DataFrame | None = None
    selected: dict = field(default_factory=dict)
    seconds: float = 0.0


def prepare(manifest_path: str | Path, scaler: BandScaler | None = None) -> PreparedData:
    """Load, gap-fill, add NDVI and normalize (fit on the whole dataset unless a scaler is given)."""
    manifest_path = Path(manifest_path)
    raw = load_dataset(manifest_path)
    return PreparedData(raw, preprocess(raw, scaler), dataset_digest(manifest_path), manifest_path)


def build_model(preset: Preset, ds: SitsDataset, seed: int, repeat_index: int = 0,
                sources: str = "both") -> Od2rnnModel:
    optical = replace(preset.optical, input_bands=len(ds.optical_bands))
    radar = replace(preset.radar, input_bands=len(ds.radar_bands))
    init = RngStream(seed).substream("init", repeat_index)
    return Od2rnnModel(optical, radar, ds.num_classes, init, sources, ds.class_names)


def _warn_missing(ds: SitsDataset, label: str) -> None:
    absent = [ds.class_names[c] for c, n in enumerate(ds.class_counts()) if n == 0]
    if absent:
        log.warning("%s: classes absent from the evaluation part: %s", label, absent)


def evaluate_model(model: Od2rnnModel, ds: SitsDataset, label: str = "") -> EvaluationReport:
    if model.num_classes != ds.num_classes:
        raise CheckpointError(f"model has {model.num_classes} classes, dataset has {ds.num_classes}")
    if (model.optical_cfg.input_bands, model.radar_cfg.input_bands) != (len(ds.optical_bands), len(ds.radar_bands)):
        raise CheckpointError(
            f"model expects {model.optical_cfg.input_bands} optical / {model.radar_cfg.input_bands} radar bands, "
            f"dataset has {len(ds.optical_bands)} / {len(ds.radar_bands)}")
    _warn_missing(ds, label)
    preds, _ = predict_dataset(model, ds)
    return evaluate(ConfusionMatrix.from_predictions(ds.labels, preds, ds.num_classes), label)


def iter_splits(ds: SitsDataset, spec: SplitSpec):
    for r in range(spec.repeats):
        part = split(ds, spec, r)
        digest = partition_digest(part)
        log.info("split %d: train %d / validation %d / test %d, partition %s",
                 r, len(part.train), len(part.validation), len(part.test), digest)
        yield part, digest


def run_od2rnn(part: DatasetSplit, digest: str, preset: Preset, seed: int, sources: str = "both",
               label: str = "OD2RNN", checkpoint_path: str | Path | None = None) -> SplitResult:
    t0 = time.perf_counter()
    model = build_model(preset, part.train, seed, part.repeat_index, sources)
    cfg = replace(preset.train, seed=seed, checkpoint_path=str(checkpoint_path) if checkpoint_path else None)
    model, history = train(model, part, cfg, RngStream(seed).substream("train", part.repeat_index))
    report = evaluate_model(model, part.test, label)
    best = history.loc[history["validation_accuracy"].idxmax()]
    log.info("%s split %d: accuracy %.4f  F %.4f  kappa %.4f",
             label, part.repeat_index, report.accuracy, report.f_measure, report.kappa)
    return SplitResult(label, part.repeat_index, report, digest, history,
                       {"best_epoch": int(best["epoch"]), "validation_accuracy": float(best["validation_accuracy"])},
                       time.perf_counter() - t0)


def run_forest(part: DatasetSplit, digest: str, source: str, preset: Preset, seed: int,
               n_jobs: int = 1) -> SplitResult:
    t0 = time.perf_counter()
    label = rf_label(source)
    # each split gets its own forest seed so trees differ across repeats
    forest_seed = int(RngStream(seed).substream("rf", part.repeat_index).integers(0, 2**31 - 1))
    base = ForestConfig(seed=forest_seed, n_jobs=n_jobs)
    best, forest, _ = grid_search(part.train, part.validation, source, preset.rf_trees, preset.rf_depths, base)
    X_test, y_test = feature_matrix(part.test, source)
    _warn_missing(part.test, label)
    cm = ConfusionMatrix.from_predictions(y_test, forest.predict(X_test), part.test.num_classes)
    report = evaluate(cm, label)
    log.info("%s split %d: accuracy %.4f  F %.4f  kappa %.4f",
             label, part.repeat_index, report.accuracy, report.f_measure, report.kappa)
    return SplitResult(label, part.repeat_index, report, digest, None,
                       {"num_trees": best.num_trees, "max_depth": best.max_depth}, time.perf_counter() - t0)


def run_method(label: str, part: DatasetSplit, digest: str, preset: Preset, seed: int, n_jobs: int = 1) -> SplitResult:
    kind, source = METHODS[label]
    if kind == "rf":
        return run_forest(part, digest, source, preset, seed, n_jobs)
    return run_od2rnn(part, digest, preset, seed, source, label)


def compare_methods(ds: SitsDataset, spec: SplitSpec, preset: Preset, seed: int,
                    methods=TABLE_METHODS, n_jobs: int = 1) -> dict[str, list[SplitResult]]:
    """Run every method on the same split sequence; the partition digest of each split is shared."""
    results: dict[str, list[SplitResult]] = {m: [] for m in methods}
    for part, digest in iter_splits(ds, spec):
        for m in methods:
            results[m].append(run_method(m, part, digest, preset, seed, n_jobs))
    return results

