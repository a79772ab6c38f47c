from __future__ import annotations

import json
import logging
from pathlib import Path

import numpy as np
import pandas as pd

from .metrics import AggregateReport, EvaluationReport

log = logging.getLogger(__name__)

__all__ = [
    "fmt_pct", "fmt_kappa", "splits_frame", "summary_dict", "report_text", "write_method_reports",
    "comparison_frame", "per_class_frame", "write_comparison", "write_json",
]


# ---------- formatting ----------
def fmt_pct(mean: float, std: float) -> str:
    """0.8948, 0.0036 → ``89.48 ± 0.36``."""
    return f"{100 * mean:.2f} ± {100 * std:.2f}"


def fmt_kappa(mean: float, std: float) -> str:
    return f"{mean:.4f} ± {std:.4f}"


def _write_csv(frame: pd.DataFrame, path: Path) -> Path:
    frame.to_csv(path, index=False, float_format="%.6f", lineterminator="\n")
    return path


def write_json(obj, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


# ---------- one method ----------
def splits_frame(reports: list[EvaluationReport], class_names: list[str], partitions: list[str] | None = None,
                 selected: list[dict] | None = None) -> pd.DataFrame:
    rows = []
    for i, r in enumerate(reports):
        row = {"split": i}
        if partitions: row["partition"] = partitions[i]
        row.update({"accuracy": r.accuracy, "f_measure": r.f_measure, "kappa": r.kappa, "macro_f": r.macro_f})
        row.update({f"f_{name}": v for name, v in zip(class_names, r.per_class_f)})
        if selected: row.update(selected[i])
        rows.append(row)
    return pd.DataFrame(rows)


def summary_dict(method: str, agg: AggregateReport, class_names: list[str]) -> dict:
    return {
        "method": method,
        "splits": agg.num_splits,
        "mean": {**{k: v for k, v in agg.mean.as_dict().items() if k != "per_class_f"},
                 "per_class_f": dict(zip(class_names, agg.mean.per_class_f.tolist()))},
        "std": {**{k: v for k, v in agg.std.as_dict().items() if k != "per_class_f"},
                "per_class_f": dict(zip(class_names, agg.std.per_class_f.tolist()))},
        "table": {"F-Measure": fmt_pct(agg.mean.f_measure, agg.std.f_measure),
                  "Kappa": fmt_kappa(agg.mean.kappa, agg.std.kappa),
                  "Accuracy": fmt_pct(agg.mean.accuracy, agg.std.accuracy)},
    }


def report_text(method: str, agg: AggregateReport, class_names: list[str]) -> str:
    overall = comparison_frame({method: agg})
    per_class = pd.DataFrame({
        "class": class_names,
        "F-Measure": [fmt_pct(m, s) for m, s in zip(agg.mean.per_class_f, agg.std.per_class_f)],
    })
    lines = [f"{method}, {agg.num_splits} split(s)", "", overall.to_string(index=False), "",
             f"Macro F-Measure: {fmt_pct(agg.mean.macro_f, agg.std.macro_f)}", "",
             "Per-class F-Measure", per_class.to_string(index=False), ""]
    return "\n".join(lines)


def write_method_reports(out_dir: str | Path, slug: str, method: str, agg: AggregateReport,
                         class_names: list[str], partitions: list[str] | None = None,
                         selected: list[dict] | None = None) -> list[Path]:
    """``<slug>_splits.csv``, ``<slug>_summary.json`` and ``<slug>_report.txt``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = [
        _write_csv(splits_frame(agg.splits, class_names, partitions, selected), out_dir / f"{slug}_splits.csv"),
        write_json(summary_dict(method, agg, class_names), out_dir / f"{slug}_summary.json"),
    ]
    txt = out_dir / f"{slug}_report.txt"
    txt.write_text(report_text(method, agg, class_names), encoding="utf-8")
    paths.append(txt)
    log.info("%s reports written to %s", method, out_dir)
    return paths


# ---------- comparison ----------
def comparison_frame(results: dict[str, AggregateReport]) -> pd.DataFrame:
    return pd.DataFrame([
        {"Method": m,
         "F-Measure": fmt_pct(a.mean.f_measure, a.std.f_measure),
         "Kappa": fmt_kappa(a.mean.kappa, a.std.kappa),
         "Accuracy": fmt_pct(a.mean.accuracy, a.std.accuracy)}
        for m, a in results.items()
    ])


def per_class_frame(results: dict[str, AggregateReport], class_names: list[str]) -> pd.DataFrame:
    """Methods × classes, mean per-class F-Measure in percent."""
    frame = pd.DataFrame({m: np.round(100 * a.mean.per_class_f, 2) for m, a in results.items()},
                         index=class_names).T
    frame.index.name = "Method"
    return frame.reset_index()


def write_comparison(out_dir: str | Path, results: dict[str, AggregateReport], class_names: list[str]) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    table = comparison_frame(results)
    per_class = per_class_frame(results, class_names)
    paths = [_write_csv(table, out_dir / "comparison.csv")]
    per_class.to_csv(out_dir / "per_class_f.csv", index=False, float_format="%.2f", lineterminator="\n")
    paths.append(out_dir / "per_class_f.csv")
    txt = out_dir / "comparison.txt"
    txt.write_text(table.to_string(index=False) + "\n\nPer-class F-Measure (%)\n"
                   + per_class.to_string(index=False) + "\n", encoding="utf-8")
    paths.append(txt)
    log.info("comparison written to %s", out_dir)
    return paths
