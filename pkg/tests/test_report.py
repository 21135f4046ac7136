"""Metrics CSV round trips, summaries, and SVG chart output."""
import json
import os

import pytest

from embaug.report import (
    CSV_COLUMNS,
    REFERENCE_TRANSFER,
    accuracy_chart,
    cost_summary,
    curves_csv,
    metrics_from_csv,
    metrics_to_csv,
    summary,
    svg_line_chart,
    write_json,
)
from embaug.transfer import MetricsRecord, aggregate_metrics


def make_records():
    out = []
    for seed in (0, 1, 2):
        for epoch in (0, 1):
            out.append(MetricsRecord(
                scenario="pixel-none", seed=seed, epoch=epoch,
                train_loss=0.5 / (epoch + 1) + seed * 0.001,
                eval_top1=0.4 + 0.1 * epoch + 0.01 * seed,
                flops_phi=1000 * (epoch + 1), flops_psi_fwd=10, flops_psi_bwd=20,
                flops_omega=0))
    return out


class TestMetricsCsv:
    def test_round_trip_exact(self):
        records = make_records()
        back = metrics_from_csv(metrics_to_csv(records))
        assert back == sorted(records, key=lambda r: (r.scenario, r.seed, r.epoch))

    def test_order_independent_bytes(self):
        records = make_records()
        assert metrics_to_csv(records) == metrics_to_csv(records[::-1])

    def test_repr_floats_survive(self):
        r = MetricsRecord(scenario="pixel-none", seed=0, epoch=0,
                          train_loss=0.1 + 0.2, eval_top1=1 / 3)
        back = metrics_from_csv(metrics_to_csv([r]))[0]
        assert back.train_loss == 0.1 + 0.2
        assert back.eval_top1 == 1 / 3

    def test_header_written(self):
        text = metrics_to_csv([])
        assert text.splitlines()[0] == ",".join(CSV_COLUMNS)

    def test_header_required_on_read(self):
        with pytest.raises(ValueError, match="header"):
            metrics_from_csv("a,b,c\n1,2,3\n")

    def test_field_count_checked(self):
        text = metrics_to_csv([]) + "pixel-none,0,0,0.5\n"
        with pytest.raises(ValueError, match="fields"):
            metrics_from_csv(text)


class TestCurves:
    def test_wide_layout(self):
        agg = aggregate_metrics(make_records())
        text = curves_csv(agg)
        lines = text.splitlines()
        assert lines[0] == ("epoch,pixel-none_median,pixel-none_min,"
                            "pixel-none_max")
        assert len(lines) == 3  # header + 2 epochs

    def test_mismatched_grids_rejected(self):
        agg = {"a": [{"epoch": 0, "median": 1, "min": 1, "max": 1}],
               "b": [{"epoch": 5, "median": 1, "min": 1, "max": 1}]}
        with pytest.raises(ValueError, match="epoch grid"):
            curves_csv(agg)

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no scenarios"):
            curves_csv({})


class TestSummary:
    def test_final_epoch_medians(self):
        s = summary(make_records())
        block = s["desk_scale"]["pixel-none"]
        assert block["final_epoch"] == 1
        assert block["median_top1"] == pytest.approx(0.51)
        assert block["seeds"] == [0, 1, 2]

    def test_reference_constants_present(self):
        s = summary(make_records())
        ref = s["reference_full_scale_percent"]["transfer"]
        assert ref["pixel-embed"]["vgg16"] == 63.68
        assert ref == REFERENCE_TRANSFER

    def test_cost_block_optional(self):
        assert "cost" not in summary(make_records())
        s = summary(make_records(), cost={"predicted_ratio": 2.0})
        assert s["cost"]["predicted_ratio"] == 2.0


class TestCostSummary:
    def test_fields(self):
        from embaug.cost import CostBreakdown
        cb = CostBreakdown(c_phi=1000, c_psi_fwd=50, c_psi_bwd=100,
                           c_omega=10, n_variants=4)
        out = cost_summary(cb, predicted=2.8, measured=2.8)
        assert out["c_phi"] == 1000
        assert out["n_variants"] == 4
        assert out["relative_error"] == 0.0

    def test_measured_optional(self):
        from embaug.cost import CostBreakdown
        cb = CostBreakdown(c_phi=1, c_psi_fwd=1, c_psi_bwd=1, c_omega=0,
                           n_variants=1)
        out = cost_summary(cb, predicted=1.0)
        assert "measured_ratio" not in out and "relative_error" not in out


class TestSvg:
    def test_series_drawn_with_legend(self):
        series = {"alpha": [(0, 0.1), (1, 0.5)], "beta": [(0, 0.2), (1, 0.3)]}
        svg = svg_line_chart(series, "demo", "epoch", "acc")
        assert svg.count("<polyline") == 2
        assert ">alpha</text>" in svg and ">beta</text>" in svg
        assert ">demo</text>" in svg
        assert svg.startswith("<svg ") and svg.rstrip().endswith("</svg>")

    def test_deterministic_bytes(self):
        series = {"a": [(0, 1.0), (2, 3.0)]}
        assert svg_line_chart(series, "t", "x", "y") == \
            svg_line_chart(series, "t", "x", "y")

    def test_single_point_does_not_crash(self):
        svg = svg_line_chart({"a": [(0, 0.5)]}, "t", "x", "y")
        assert "<polyline" in svg

    def test_empty_rejected(self):
        with pytest.raises(ValueError, match="no series"):
            svg_line_chart({}, "t", "x", "y")

    def test_accuracy_chart_from_aggregate(self):
        agg = aggregate_metrics(make_records())
        svg = accuracy_chart(agg)
        assert ">pixel-none</text>" in svg


class TestWriteJson:
    def test_atomic_and_sorted(self, tmp_path):
        path = tmp_path / "summary.json"
        write_json(str(path), {"b": 1, "a": 2})
        data = json.loads(path.read_text())
        assert data == {"a": 2, "b": 1}
        assert list(data) == ["a", "b"]
        leftovers = [f for f in os.listdir(tmp_path) if f != "summary.json"]
        assert leftovers == []
