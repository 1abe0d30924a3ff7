"""SVG chart emission from metrics CSVs."""

import numpy as np
import pytest

from cntlab.errors import ValidationError
from cntlab.plots import (
    _heat_color,
    bucket_heatmap,
    line_chart,
    read_metrics_csv,
    render_plots,
)

HEADER = "epoch,split,head,metric,value,bucket\n"

BASELINE_CSV = HEADER + (
    "0,train,,loss,0.9,\n"
    "0,train,mean,accuracy,0.4,\n"
    "0,train,,lr,0.1,\n"
    "0,eval,head0,accuracy,0.5,\n"
    "0,eval,mean,accuracy,0.5,\n"
    "1,train,,loss,0.7,\n"
    "1,eval,head0,accuracy,0.62,\n"
    "1,eval,mean,accuracy,0.62,\n"
)

# two epochs, two noise buckets, second bucket empty in epoch 0
CONDITIONED_CSV = BASELINE_CSV + (
    "0,train,,bucket_accuracy,0.8,0\n"
    "0,train,,bucket_loss,0.5,0\n"
    "1,train,,bucket_accuracy,0.9,0\n"
    "1,train,,bucket_accuracy,0.55,1\n"
)


def test_read_metrics_csv_types(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text(CONDITIONED_CSV)
    rows = read_metrics_csv(p)
    first = rows[0]
    assert first == {"epoch": 0, "split": "train", "head": "", "metric": "loss",
                     "value": 0.9, "bucket": None}
    buckets = [r["bucket"] for r in rows if r["metric"] == "bucket_accuracy"]
    assert buckets == [0, 0, 1]
    assert all(isinstance(r["epoch"], int) for r in rows)


def test_read_metrics_csv_rejects_wrong_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("epoch,split,head,metric,value\n0,train,,loss,0.9\n")
    with pytest.raises(ValidationError, match="expected columns"):
        read_metrics_csv(p)


def test_render_plots_baseline_run(tmp_path):
    p = tmp_path / "metrics.csv"
    p.write_text(BASELINE_CSV)
    written = render_plots(p)
    assert [w.rsplit("/", 1)[-1] for w in written] == ["learning_curves.svg"]
    svg = (tmp_path / "learning_curves.svg").read_text()
    assert svg.startswith("<svg ")
    assert "train loss" in svg and "eval accuracy" in svg
    assert svg.count("<polyline") == 2


def test_render_plots_conditioned_run(tmp_path):
    p = tmp_path / "metrics.csv"
    p.write_text(CONDITIONED_CSV)
    out = tmp_path / "charts"
    written = render_plots(p, out)
    names = sorted(w.rsplit("/", 1)[-1] for w in written)
    assert names == ["bucket_curves.svg", "bucket_heatmap.svg", "learning_curves.svg"]
    curves = (out / "bucket_curves.svg").read_text()
    assert "t in [0.0,0.1)" in curves and "t in [0.1,0.2)" in curves
    heat = (out / "bucket_heatmap.svg").read_text()
    # 3 finite cells + 1 frame + 40-rect color key + background
    assert heat.count("<rect") == 3 + 1 + 40 + 1


def test_heat_color_anchors_and_clamping():
    assert _heat_color(0.0) == "rgb(68,1,84)"
    assert _heat_color(0.5) == "rgb(33,145,140)"
    assert _heat_color(1.0) == "rgb(253,231,37)"
    assert _heat_color(-3.0) == _heat_color(0.0)
    assert _heat_color(7.0) == _heat_color(1.0)


def test_line_chart_skips_non_finite_points():
    svg = line_chart([("a", [0, 1, 2, 3], [0.1, np.nan, 0.3, 0.4])],
                     "t", "x", "y")
    line = next(l for l in svg.splitlines() if "<polyline" in l)
    assert line.count(",") == 3  # three finite points survive


def test_line_chart_constant_series_has_valid_axes():
    svg = line_chart([("flat", [0, 1], [0.5, 0.5])], "t", "x", "y")
    assert "nan" not in svg.lower()


def test_bucket_heatmap_nan_cells_left_blank():
    m = np.array([[0.2, np.nan], [0.8, 1.0]])
    svg = bucket_heatmap(m, "h")
    assert svg.count("<rect") == 3 + 1 + 40 + 1
    assert "rgb(253,231,37)" in svg
