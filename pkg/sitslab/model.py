# sitslab/model.py: two-branch recurrent fusion network (radar + optical streams)
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Literal

import numpy as np

from .config import StreamConfig
from .errors import ArgumentError, CheckpointError, ShapeError, StateError
from .layers import AttentionHead, DropoutMask, FcLayer, GruCell, softmax_cross_entropy
from .numeric import Matrix, RngStream, as_matrix, softmax

log = logging.getLogger(__name__)

__all__ = [
    "StreamConfig", "Stream", "StreamFeatures", "ModelOutput", "LossParts", "Od2rnnModel",
    "save_checkpoint", "load_checkpoint", "CHECKPOINT_VERSION",
]

Sources = Literal["both", "optical", "radar"]
Mode = Literal["train", "eval"]

CHECKPOINT_VERSION = 1

# Auxiliary classifiers weigh half of the fusion classifier in both the loss and the prediction.
FUSION_WEIGHTS = {"radar": 0.5, "optical": 0.5, "fusion": 1.0}


class Stream:
    """FC1 → dropout → FC2 → GRU → dropout → attention, applied to one source."""

    def __init__(self, cfg: StreamConfig, stream: RngStream | None = None):
        self.cfg = cfg
        if stream is None:
            self.fc1 = FcLayer(np.zeros((cfg.fc1_units, cfg.input_bands)), np.zeros(cfg.fc1_units))
            self.fc2 = FcLayer(np.zeros((cfg.fc2_units, cfg.fc1_units)), np.zeros(cfg.fc2_units))
            self.gru = GruCell.zeros(cfg.fc2_units, cfg.hidden_units)
            H = cfg.hidden_units
            self.attention = AttentionHead(np.zeros((H, H)), np.zeros(H), np.zeros(H))
        else:
            self.fc1 = FcLayer.create(cfg.input_bands, cfg.fc1_units, stream.substream("fc1"))
            self.fc2 = FcLayer.create(cfg.fc1_units, cfg.fc2_units, stream.substream("fc2"))
            self.gru = GruCell.create(cfg.fc2_units, cfg.hidden_units, stream.substream("gru"))
            self.attention = AttentionHead.create(cfg.hidden_units, stream.substream("attention"))
        self.drop_fc = DropoutMask(cfg.dropout_rate)
        self.drop_gru = DropoutMask(cfg.dropout_rate)
        self.weights: Matrix | None = None

    def params(self) -> dict[str, Matrix]:
        out = {}
        for name, layer in (("fc1", self.fc1), ("fc2", self.fc2), ("gru", self.gru), ("attention", self.attention)):
            out.update({f"{name}.{k}": v for k, v in layer.params().items()})
        return out

    def forward(self, series, mode: Mode = "eval", rng: RngStream | None = None) -> Matrix:
        series = as_matrix(series)
        if series.ndim != 2 or series.shape[1] != self.cfg.input_bands:
            raise ShapeError(f"stream expects (T, {self.cfg.input_bands}) series, got {series.shape}")
        x = self.drop_fc.apply(self.fc1.forward(series), rng, mode)
        hs = self.gru.forward(self.fc2.forward(x))
        hs = self.drop_gru.apply(hs, rng, mode)
        feat, self.weights = self.attention.forward(hs)
        return feat

    def backward(self, grad_feat) -> dict[str, Matrix]:
        grads = {}
        g_hs, g_att = self.attention.backward(grad_feat)
        g_x, _, g_gru = self.gru.backward(self.drop_gru.backward(g_hs))
        g_fc1_out, grads["fc2.W"], grads["fc2.b"] = self.fc2.backward(g_x)
        _, grads["fc1.W"], grads["fc1.b"] = self.fc1.backward(self.drop_fc.backward(g_fc1_out))
        grads.update({f"gru.{k}": v for k, v in g_gru.items()})
        grads.update({f"attention.{k}": v for k, v in g_att.items()})
        return grads


@dataclass
class StreamFeatures:
    radar_feat: Matrix | None
    opt_feat: Matrix | None


@dataclass
class ModelOutput:
    features: StreamFeatures
    logits: dict[str, Matrix]
    attention: dict[str, Matrix] = field(default_factory=dict)

    @property
    def logits_radar(self): return self.logits.get("radar")

    @property
    def logits_optical(self): return self.logits.get("optical")

    @property
    def logits_fusion(self): return self.logits.get("fusion")


@dataclass
class LossParts:
    total: float
    radar: float = float("nan")
    optical: float = float("nan")
    fusion: float = float("nan")


class Od2rnnModel:
    """Twin optical/radar streams with per-source auxiliary classifiers and a fusion classifier.

    ``sources="optical"`` or ``"radar"`` builds a single-stream ablation whose
    only classifier carries weight 1.
    """

    def __init__(self, optical: StreamConfig, radar: StreamConfig, num_classes: int,
                 stream: RngStream | None = None, sources: Sources = "both",
                 class_names: list[str] | None = None):
        if num_classes < 2:
            raise ArgumentError(f"num_classes must be >= 2, got {num_classes}")
        if sources not in ("both", "optical", "radar"):
            raise ArgumentError(f"unknown sources '{sources}'")
        self.optical_cfg, self.radar_cfg = optical, radar
        self.num_classes = num_classes
        self.sources = sources
        self.class_names = list(class_names) if class_names else [str(c) for c in range(num_classes)]

        def sub(name):
            return None if stream is None else stream.substream(name)

        def linear(n_in, name):
            if stream is None:
                return FcLayer(np.zeros((num_classes, n_in)), np.zeros(num_classes), "none")
            return FcLayer.create(n_in, num_classes, stream.substream(name), "none")

        self.streams: dict[str, Stream] = {}
        self.classifiers: dict[str, FcLayer] = {}
        # radar first: the fusion classifier sees [radar_feat, opt_feat]
        if sources in ("both", "radar"):
            self.streams["radar"] = Stream(radar, sub("radar"))
            self.classifiers["radar"] = linear(radar.hidden_units, "classifier_radar")
        if sources in ("both", "optical"):
            self.streams["optical"] = Stream(optical, sub("optical"))
            self.classifiers["optical"] = linear(optical.hidden_units, "classifier_optical")
        if sources == "both":
            self.classifiers["fusion"] = linear(radar.hidden_units + optical.hidden_units, "classifier_fusion")
        self.loss_weights = dict(FUSION_WEIGHTS) if sources == "both" else {sources: 1.0}
        self._last: ModelOutput | None = None

    @classmethod
    def zeros(cls, optical: StreamConfig, radar: StreamConfig, num_classes: int,
              sources: Sources = "both") -> "Od2rnnModel":
        return cls(optical, radar, num_classes, None, sources)

    # ------------------------------ PARAMETERS ------------------------------

    def parameters(self) -> dict[str, Matrix]:
        """Live views of every learnable array, keyed ``owner.layer.param``."""
        out = {}
        for src, s in self.streams.items():
            out.update({f"{src}.{k}": v for k, v in s.params().items()})
        for name, clf in self.classifiers.items():
            out.update({f"classifier_{name}.{k}": v for k, v in clf.params().items()})
        return out

    def snapshot(self) -> dict[str, Matrix]:
        return {k: v.copy() for k, v in self.parameters().items()}

    def load_parameters(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        missing = set(params) - set(values)
        if missing:
            raise CheckpointError(f"missing parameters: {sorted(missing)}")
        for k, p in params.items():
            v = np.asarray(values[k], dtype=np.float64)
            if v.shape != p.shape:
                raise CheckpointError(f"parameter {k}: stored shape {v.shape} != model shape {p.shape}")
            np.copyto(p, v)

    # ------------------------------ FORWARD ------------------------------

    def forward(self, sample, mode: Mode = "eval", rng: RngStream | None = None) -> ModelOutput:
        feats: dict[str, Matrix] = {}
        for src, s in self.streams.items():
            series = sample.optical if src == "optical" else sample.radar
            cfg = s.cfg
            if np.ndim(series) != 2 or np.shape(series)[1] != cfg.input_bands:
                raise ShapeError(f"{src} series has shape {np.shape(series)}, model expects (T, {cfg.input_bands})")
            feats[src] = s.forward(series, mode, rng)
        logits = {src: self.classifiers[src].forward(f) for src, f in feats.items()}
        if "fusion" in self.classifiers:
            logits["fusion"] = self.classifiers["fusion"].forward(np.concatenate([feats["radar"], feats["optical"]]))
        out = ModelOutput(
            StreamFeatures(feats.get("radar"), feats.get("optical")),
            logits,
            {src: s.weights for src, s in self.streams.items()},
        )
        self._last = out
        return out

    def loss(self, output: ModelOutput, true_class: int) -> LossParts:
        if not 0 <= true_class < self.num_classes:
            raise ArgumentError(f"class {true_class} out of range for {self.num_classes} classes")
        parts = {name: softmax_cross_entropy(lg, true_class)[0] for name, lg in output.logits.items()}
        total = sum(self.loss_weights[name] * v for name, v in parts.items())
        return LossParts(total=total, **parts)

    def combine(self, output: ModelOutput) -> Matrix:
        """Weighted mix of the classifiers' softmax outputs, renormalized to a distribution."""
        mix = sum(self.loss_weights[name] * softmax(lg) for name, lg in output.logits.items())
        return mix / sum(self.loss_weights.values())

    def predict(self, sample) -> tuple[int, Matrix]:
        probs = self.combine(self.forward(sample, "eval"))
        return int(np.argmax(probs)), probs  # argmax returns the lowest index on ties

    # ------------------------------ BACKWARD ------------------------------

    def backward(self, true_class: int) -> dict[str, Matrix]:
        """Gradients of the weighted total loss of the last forward pass."""
        if self._last is None:
            raise StateError("backward called before forward")
        out = self._last
        grad_feat = {src: 0.0 for src in self.streams}
        grads: dict[str, Matrix] = {}
        for name, lg in out.logits.items():
            _, _, g = softmax_cross_entropy(lg, true_class)
            g_in, grads[f"classifier_{name}.W"], grads[f"classifier_{name}.b"] = \
                self.classifiers[name].backward(self.loss_weights[name] * g)
            if name == "fusion":
                hr = self.radar_cfg.hidden_units
                grad_feat["radar"] = grad_feat["radar"] + g_in[:hr]
                grad_feat["optical"] = grad_feat["optical"] + g_in[hr:]
            else:
                grad_feat[name] = grad_feat[name] + g_in
        for src, s in self.streams.items():
            grads.update({f"{src}.{k}": v for k, v in s.backward(grad_feat[src]).items()})
        return grads

    def describe(self) -> dict:
        return {
            "sources": self.sources,
            "num_classes": self.num_classes,
            "class_names": self.class_names,
            "optical": asdict(self.optical_cfg),
            "radar": asdict(self.radar_cfg),
            "loss_weights": self.loss_weights,
        }


# ------------------------------ CHECKPOINTS ------------------------------

def save_checkpoint(model: Od2rnnModel, path: str | Path, **extra) -> Path:
    """Write every parameter plus a JSON header into an ``.npz`` container.

    Extra keyword values (band scaler, seed, ...) must be JSON-serializable.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format_version": CHECKPOINT_VERSION, **model.describe(), **extra}
    arrays = {k: v for k, v in model.parameters().items()}
    with path.open("wb") as fh:
        np.savez(fh, __meta__=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    log.info("checkpoint written to %s (%d arrays)", path, len(arrays))
    return path


def load_checkpoint(path: str | Path) -> tuple[Od2rnnModel, dict]:
    path = Path(path)
    with np.load(path, allow_pickle=False) as npz:
        if "__meta__" not in npz.files:
            raise CheckpointError(f"{path}: not a sitslab checkpoint (no header)")
        meta = json.loads(str(npz["__meta__"]))
        if meta.get("format_version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"{path}: unsupported checkpoint version {meta.get('format_version')}")
        values = {k: npz[k] for k in npz.files if k != "__meta__"}
    model = Od2rnnModel.zeros(StreamConfig(**meta["optical"]), StreamConfig(**meta["radar"]),
                              meta["num_classes"], meta["sources"])
    model.class_names = list(meta["class_names"])
    model.load_parameters(values)
    return model, meta
