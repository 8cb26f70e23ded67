"""Rendering and delimited-output tests.

The sensitivity arrow line is the one hard formatting contract: fractions in,
percentages out, drop annotated with a direction arrow. Everything else is
checked by reading back what the writers produced.
"""

import csv
import json
import math

import numpy as np
import pytest

from steprobe.evaluation import AblationRow, CorruptionResult, EvalReport
from steprobe.manifest import SymmetricSplit
from steprobe.probes import ProbeConfig
from steprobe.reporting import (fmt_pct, render_ablation_table,
                                render_class_table, render_confusion_matrix,
                                render_eval_report, render_sensitivity_line,
                                write_ablation_csv, write_class_csv,
                                write_confusion_csv, write_history_csv,
                                write_metrics_csv, write_sensitivity_csv)
from steprobe.training import TrainHistory
from steprobe import figures


def tiny_report(with_corruption=False) -> EvalReport:
    corruption = {}
    if with_corruption:
        corruption = {
            "reverse": CorruptionResult(accuracy=0.4226, delta=0.8 - 0.4226,
                                        mirror_rate=0.9),
            "shuffle": CorruptionResult(accuracy=0.8, delta=0.0,
                                        mirror_rate=0.25),
        }
    return EvalReport(
        split_name="test", num_clips=10,
        overall_acc=0.8, sym_acc=0.7, nsym_acc=0.9,
        per_class_acc=[0.75, 0.65, 0.9],
        confusion=np.array([[3, 1, 0], [1, 3, 0], [0, 0, 2]], dtype=np.int64),
        mirror_confusion={0: 0.25, 1: 0.25},
        top_confusion={2: (0, 0.0)},
        class_names=("pair00_fwd", "pair00_rev", "solo00"),
        param_count=1234, probe_gflops_estimate=0.5,
        corruption=corruption)


def tiny_history() -> TrainHistory:
    return TrainHistory(train_loss=[1.2, 0.6, 0.3], val_acc=[0.3, 0.7, 0.9],
                        lr=[1e-3, 8e-4, 2e-4], best_epoch=2, best_val_acc=0.9)


def tiny_rows() -> list[AblationRow]:
    cfg = ProbeConfig.for_variant("linear", d_model=8, num_classes=3,
                                  num_frames=2, tokens_per_frame=2)
    return [AblationRow("self-attn", cfg, tiny_report()),
            AblationRow("step", cfg, tiny_report(with_corruption=True))]


# ---------------------------------------------------------------------------
# the arrow line


def test_sensitivity_line_literal():
    # fractions in, percentages out, two decimals, drop arrow
    assert render_sensitivity_line(0.8702, 0.4226) == "87.02 → 42.26 (↓ 44.76)"


def test_sensitivity_line_no_change_is_zero_drop():
    assert render_sensitivity_line(0.5, 0.5) == "50.00 → 50.00 (↓ 0.00)"


def test_sensitivity_line_improvement_flips_arrow():
    assert render_sensitivity_line(0.4, 0.6) == "40.00 → 60.00 (↑ 20.00)"


def test_fmt_pct():
    assert fmt_pct(0.12345) == "12.35"
    assert fmt_pct(1.0) == "100.00"
    assert fmt_pct(float("nan")) == "n/a"


# ---------------------------------------------------------------------------
# text tables


def test_eval_report_contains_headline_numbers():
    text = render_eval_report(tiny_report(), "steppy")
    assert "steppy" in text
    assert "80.00" in text and "70.00" in text and "90.00" in text
    assert "1,234" in text


def test_eval_report_renders_corruption_rows():
    text = render_eval_report(tiny_report(with_corruption=True), "p")
    assert "reverse" in text and "shuffle" in text
    assert "80.00 → 42.26" in text
    # the invariant-probe signature: no drop at all
    assert "(↓ 0.00)" in text


def test_class_table_names_mirror_partner_with_split():
    split = SymmetricSplit(pairs=((0, 1),), num_classes=3)
    text = render_class_table(tiny_report(), split)
    lines = text.splitlines()
    fwd_row = next(l for l in lines if l.startswith("pair00_fwd"))
    assert "pair00_rev" in fwd_row and "mirror" in fwd_row


def test_class_table_without_split_still_renders():
    text = render_class_table(tiny_report(), None)
    assert "pair00_fwd" in text and "solo00" in text


def test_confusion_matrix_rows_sum_to_counts():
    text = render_confusion_matrix(tiny_report())
    row = next(l for l in text.splitlines() if "pair00_fwd" in l)
    assert "3" in row and "1" in row


def test_ablation_table_has_one_line_per_rung():
    text = render_ablation_table(tiny_rows())
    lines = [l for l in text.splitlines()[2:] if l.strip()]
    assert len(lines) == 2
    assert lines[0].startswith("self-attn")
    assert lines[1].startswith("step")


def test_tables_are_aligned():
    # the second column starts at the same character offset in every row
    text = render_ablation_table(tiny_rows())
    lines = text.splitlines()
    offset = lines[0].index("overall")
    for line in lines[1:]:
        assert line[offset - 1] == " " and line[offset] != " "


# ---------------------------------------------------------------------------
# round trip through dict form


def test_eval_report_dict_round_trip():
    r = tiny_report(with_corruption=True)
    back = EvalReport.from_dict(json.loads(json.dumps(r.to_dict())))
    assert back.overall_acc == r.overall_acc
    assert back.class_names == r.class_names
    assert np.array_equal(back.confusion, r.confusion)
    assert back.mirror_confusion == r.mirror_confusion
    assert back.top_confusion == r.top_confusion
    assert back.corruption["reverse"].mirror_rate == 0.9


def test_ablation_row_dict_round_trip():
    row = tiny_rows()[1]
    back = AblationRow.from_dict(json.loads(json.dumps(row.to_dict())))
    assert back.name == row.name
    assert back.config == row.config
    assert back.report.overall_acc == row.report.overall_acc


# ---------------------------------------------------------------------------
# delimited writers


def test_metrics_csv(tmp_path):
    p = tmp_path / "m.csv"
    write_metrics_csv(p, tiny_report(), "probe-x")
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 1
    assert rows[0]["probe"] == "probe-x"
    assert float(rows[0]["overall_acc"]) == 0.8
    assert int(rows[0]["param_count"]) == 1234


def test_class_csv(tmp_path):
    p = tmp_path / "c.csv"
    write_class_csv(p, tiny_report())
    rows = list(csv.DictReader(open(p)))
    assert [r["class_name"] for r in rows] == \
        ["pair00_fwd", "pair00_rev", "solo00"]
    assert float(rows[0]["mirror_confusion"]) == 0.25
    assert rows[2]["mirror_confusion"] == ""


def test_confusion_csv(tmp_path):
    p = tmp_path / "cm.csv"
    write_confusion_csv(p, tiny_report())
    rows = list(csv.reader(open(p)))
    assert rows[0][1:] == ["pair00_fwd", "pair00_rev", "solo00"]
    assert [int(x) for x in rows[1][1:]] == [3, 1, 0]


def test_sensitivity_csv_deltas(tmp_path):
    p = tmp_path / "s.csv"
    write_sensitivity_csv(p, tiny_report(with_corruption=True))
    rows = list(csv.DictReader(open(p)))
    by_mode = {r["mode"]: r for r in rows}
    assert float(by_mode["shuffle"]["delta"]) == 0.0
    assert math.isclose(float(by_mode["reverse"]["corrupted_acc"]), 0.4226)


def test_ablation_csv(tmp_path):
    p = tmp_path / "a.csv"
    write_ablation_csv(p, tiny_rows())
    rows = list(csv.DictReader(open(p)))
    assert [r["variant"] for r in rows] == ["self-attn", "step"]


def test_history_csv(tmp_path):
    p = tmp_path / "h.csv"
    write_history_csv(p, tiny_history())
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 3
    assert float(rows[1]["val_acc"]) == 0.7
    assert int(rows[2]["epoch"]) == 2


# ---------------------------------------------------------------------------
# figures render real PNG files


def _is_png(path) -> bool:
    return path.stat().st_size > 1000 and \
        path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_confusion_heatmap_png(tmp_path):
    out = figures.save_confusion_heatmap(tiny_report(), tmp_path / "cm.png")
    assert _is_png(out)


def test_history_curves_png(tmp_path):
    out = figures.save_history_curves(tiny_history(), tmp_path / "h.png")
    assert _is_png(out)


def test_sensitivity_bars_png(tmp_path):
    out = figures.save_sensitivity_bars(tiny_report(with_corruption=True),
                                        tmp_path / "s.png")
    assert _is_png(out)


def test_ablation_bars_png(tmp_path):
    out = figures.save_ablation_bars(tiny_rows(), tmp_path / "a.png")
    assert _is_png(out)
