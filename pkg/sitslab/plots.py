# sitslab/plots.py
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
import pandas as pd
import plotly.express as px

from .data import SitsDataset
from .metrics import AggregateReport
from .model import Od2rnnModel

log = logging.getLogger(__name__)

__all__ = ["COLORS", "TEMPLATE", "confusion_figure", "history_figure", "attention_figure",
           "mean_attention", "write_figure"]

# ---------- colors / template ----------
COLORS = ["#22c55e", "#eab308", "#3b82f6", "#ef4444", "#a855f7"]
TEMPLATE = "plotly_dark"


def confusion_figure(agg: AggregateReport, class_names: list[str], title: str = ""):
    """Row-normalized confusion matrix summed over all splits."""
    counts = sum(r.confusion.counts for r in agg.splits if r.confusion is not None)
    support = counts.sum(axis=1, keepdims=True)
    share = np.divide(counts, support, out=np.zeros(counts.shape), where=support > 0)
    fig = px.imshow(share, x=class_names, y=class_names, zmin=0, zmax=1, text_auto=".2f",
                    color_continuous_scale="Viridis", template=TEMPLATE,
                    labels={"x": "Predicted", "y": "True", "color": "Share"},
                    title=title or f"{agg.mean.label}: confusion ({agg.num_splits} splits)")
    return fig


def history_figure(history: pd.DataFrame, title: str = "Training history"):
    long = history.melt(id_vars="epoch", value_vars=[c for c in history.columns if c != "epoch"],
                        var_name="series", value_name="value").dropna()
    return px.line(long, x="epoch", y="value", color="series", title=title,
                   template=TEMPLATE, color_discrete_sequence=COLORS)


def mean_attention(model: Od2rnnModel, ds: SitsDataset) -> dict[str, np.ndarray]:
    """Average attention weight per acquisition date, per stream."""
    sums: dict[str, np.ndarray] = {}
    for s in ds.samples:
        out = model.forward(s, "eval")
        for src, w in out.attention.items():
            sums[src] = sums.get(src, 0.0) + w
    return {src: v / len(ds) for src, v in sums.items()}


def attention_figure(model: Od2rnnModel, ds: SitsDataset, title: str = "Mean attention per date"):
    frames = []
    for src, w in mean_attention(model, ds).items():
        dates = ds.optical_dates if src == "optical" else ds.radar_dates
        frames.append(pd.DataFrame({"Date": pd.to_datetime(dates), "weight": w, "stream": src}))
    return px.line(pd.concat(frames), x="Date", y="weight", color="stream", markers=True, title=title,
                   template=TEMPLATE, color_discrete_sequence=COLORS)


def write_figure(fig, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.write_html(path, include_plotlyjs="cdn")
    log.info("figure written to %s", path)
    return path
