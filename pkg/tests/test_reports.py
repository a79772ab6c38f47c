"""reports and plots: written tables and figure colors."""

from __future__ import annotations

import json

import pandas as pd

from sitslab.metrics import ConfusionMatrix, aggregate, evaluate
from sitslab.plots import COLORS, TEMPLATE, history_figure
from sitslab.reports import (
    comparison_frame,
    fmt_kappa,
    fmt_pct,
    per_class_frame,
    write_comparison,
    write_method_reports,
)

CLASSES = ["water", "crop"]


def _agg(label, *matrices):
    return aggregate([evaluate(ConfusionMatrix(2, m), label) for m in matrices])


def test_mean_pm_std_format():
    assert fmt_pct(0.8948, 0.0036) == "89.48 ± 0.36"
    assert fmt_kappa(0.8811, 0.0041) == "0.8811 ± 0.0041"
    assert fmt_pct(1.0, 0.0) == "100.00 ± 0.00"


def test_comparison_and_per_class_tables():
    results = {"RF(S2)": _agg("RF(S2)", [[30, 10], [5, 55]]), "OD2RNN": _agg("OD2RNN", [[40, 0], [0, 60]])}
    table = comparison_frame(results)
    assert table["Method"].tolist() == ["RF(S2)", "OD2RNN"]
    assert table.loc[0, "Accuracy"] == "85.00 ± 0.00"
    assert table.loc[1, "Kappa"] == "1.0000 ± 0.0000"
    per_class = per_class_frame(results, CLASSES)
    assert per_class.columns.tolist() == ["Method", "water", "crop"]
    assert per_class.loc[0, "water"] == 80.0 and per_class.loc[1, "crop"] == 100.0


def test_method_report_files(tmp_path):
    agg = _agg("OD2RNN", [[30, 10], [5, 55]], [[35, 5], [5, 55]])
    paths = write_method_reports(tmp_path, "od2rnn", "OD2RNN", agg, CLASSES, ["aaaa", "bbbb"],
                                 [{"best_epoch": 3}, {"best_epoch": 5}])
    assert [p.name for p in paths] == ["od2rnn_splits.csv", "od2rnn_summary.json", "od2rnn_report.txt"]
    splits = pd.read_csv(tmp_path / "od2rnn_splits.csv")
    assert splits.columns.tolist()[:3] == ["split", "partition", "accuracy"]
    assert splits["best_epoch"].tolist() == [3, 5]
    summary = json.loads((tmp_path / "od2rnn_summary.json").read_text())
    assert summary["splits"] == 2
    assert summary["table"]["Accuracy"] == "87.50 ± 2.50"
    assert set(summary["mean"]["per_class_f"]) == set(CLASSES)
    text = (tmp_path / "od2rnn_report.txt").read_text()
    assert "Per-class F-Measure" in text and "water" in text


def test_comparison_files(tmp_path):
    results = {"RF(S1)": _agg("RF(S1)", [[20, 20], [20, 40]])}
    names = [p.name for p in write_comparison(tmp_path, results, CLASSES)]
    assert names == ["comparison.csv", "per_class_f.csv", "comparison.txt"]
    assert (tmp_path / "comparison.csv").read_text().splitlines()[0] == "Method,F-Measure,Kappa,Accuracy"


def test_history_figure_uses_the_palette_in_order():
    history = pd.DataFrame({"epoch": [1, 2], "train_loss": [1.0, 0.5], "validation_accuracy": [0.4, 0.6]})
    fig = history_figure(history)
    assert [t.name for t in fig.data] == ["train_loss", "validation_accuracy"]
    assert [t.line.color for t in fig.data] == COLORS[:2]
    assert TEMPLATE == "plotly_dark"
