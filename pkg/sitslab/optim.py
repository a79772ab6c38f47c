# sitslab/optim.py: Adam and the mini-batch training loop with best-on-validation selection
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .config import TrainConfig
from .data import DatasetSplit, SitsDataset
from .errors import ArgumentError, ShapeError, TrainingError
from .model import Od2rnnModel, save_checkpoint
from .numeric import RngStream

log = logging.getLogger(__name__)

__all__ = ["AdamState", "adam_step", "train", "predict_dataset", "evaluate_accuracy", "write_history",
           "HISTORY_COLUMNS"]

HISTORY_COLUMNS = ["epoch", "train_loss", "loss_radar", "loss_optical", "loss_fusion", "validation_accuracy"]


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "AdamState":
        return cls(cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)


def adam_step(state: AdamState, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> dict[str, np.ndarray]:
    """Bias-corrected Adam update, applied in place to every array of ``params``."""
    if set(params) != set(grads):
        raise ArgumentError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient {name} has shape {g.shape}, parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient for {name}", parameter=name)

    state.step += 1
    t = state.step
    c1, c2 = 1.0 - state.beta1 ** t, 1.0 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)
    return params


def predict_dataset(model: Od2rnnModel, ds: SitsDataset) -> tuple[np.ndarray, np.ndarray]:
    preds, probs = [], []
    for s in ds.samples:
        c, p = model.predict(s)
        preds.append(c)
        probs.append(p)
    return np.array(preds, dtype=int), np.array(probs)


def evaluate_accuracy(model: Od2rnnModel, ds: SitsDataset) -> float:
    if len(ds) == 0:
        raise ArgumentError("cannot evaluate accuracy on an empty dataset")
    preds, _ = predict_dataset(model, ds)
    return float(np.mean(preds == ds.labels))


def train(model: Od2rnnModel, split: DatasetSplit, config: TrainConfig,
          rng: RngStream | None = None) -> tuple[Od2rnnModel, pd.DataFrame]:
    """Mini-batch Adam over ``config.epochs`` epochs.

    The returned model carries the parameters of the epoch with the highest
    validation accuracy (earliest epoch on ties).
    """
    train_ds, val_ds = split.train, split.validation
    if len(train_ds) == 0 or len(val_ds) == 0:
        raise ArgumentError(f"train ({len(train_ds)}) and validation ({len(val_ds)}) parts must be nonempty")
    root = rng or RngStream(config.seed)
    shuffle, dropout = root.substream("shuffle"), root.substream("dropout")
    state = AdamState.from_config(config)
    params = model.parameters()
    n, bs = len(train_ds), config.batch_size

    best_acc, best_epoch, best_params = -1.0, 0, None
    rows = []
    t0 = time.perf_counter()
    for epoch in range(1, config.epochs + 1):
        order = shuffle.permutation(n)
        losses = []
        for start in range(0, n, bs):
            batch = order[start:start + bs]
            acc = None
            for i in batch:
                s = train_ds.samples[i]
                parts = model.loss(model.forward(s, "train", dropout), s.label)
                g = model.backward(s.label)
                if acc is None:
                    acc = {k: v.copy() for k, v in g.items()}
                else:
                    for k, v in g.items():
                        acc[k] += v
                losses.append((parts.total, parts.radar, parts.optical, parts.fusion))
            adam_step(state, params, {k: v / len(batch) for k, v in acc.items()})
            log.debug("epoch %d batch %d: mean loss %.5f", epoch, start // bs, np.mean([l[0] for l in losses[-len(batch):]]))

        val_acc = evaluate_accuracy(model, val_ds)
        mean_losses = np.mean(np.array(losses, dtype=float), axis=0)
        rows.append([epoch, *mean_losses.tolist(), val_acc])
        if val_acc > best_acc:
            best_acc, best_epoch, best_params = val_acc, epoch, model.snapshot()
            log.info("epoch %d: new best validation accuracy %.4f", epoch, val_acc)
        if epoch % config.log_every == 0 or epoch == config.epochs:
            log.info("epoch %4d/%d  loss %.4f  val acc %.4f  (best %.4f @ %d, %.1fs)",
                     epoch, config.epochs, mean_losses[0], val_acc, best_acc, best_epoch, time.perf_counter() - t0)

    model.load_parameters(best_params)
    history = pd.DataFrame(rows, columns=HISTORY_COLUMNS)
    history["epoch"] = history["epoch"].astype(int)
    if config.checkpoint_path:
        extra = {"seed": config.seed, "best_epoch": best_epoch, "validation_accuracy": best_acc}
        if train_ds.scaler is not None:
            extra["scaler"] = train_ds.scaler.to_dict()
        save_checkpoint(model, config.checkpoint_path, **extra)
    log.info("training done: best validation accuracy %.4f at epoch %d", best_acc, best_epoch)
    return model, history


def write_history(history: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    history.to_csv(path, index=False, float_format="%.10g", lineterminator="\n")
    return path
