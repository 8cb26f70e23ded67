"""Text tables and delimited output for evaluation results.

Accuracies render as percentages with two decimals. Sensitivity rows use the
arrow notation ``87.02 → 42.26 (↓ 44.76)``.
"""

from __future__ import annotations

import csv
import math
from pathlib import Path
from typing import Sequence

from .evaluation import AblationRow, EvalReport, MultiTaskReport
from .training import TrainHistory


def fmt_pct(x: float) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "n/a"
    return f"{100.0 * x:.2f}"


def render_sensitivity_line(clean: float, corrupted: float) -> str:
    """One corruption entry: clean and corrupted accuracy plus the drop."""
    delta = 100.0 * (clean - corrupted)
    arrow = "↓" if delta >= 0 else "↑"
    return f"{fmt_pct(clean)} → {fmt_pct(corrupted)} ({arrow} {abs(delta):.2f})"


def _table(headers: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
    out = [line(headers), line("-" * w for w in widths)]
    out.extend(line(r) for r in rows)
    return "\n".join(out)


def render_eval_report(report: EvalReport, name: str = "probe",
                       split=None) -> str:
    """Human-readable summary: headline metrics, sensitivity, per-class table.

    ``split`` is an optional SymmetricSplit; when given, the per-class table
    names each symmetric class's mirror partner.
    """
    parts = [
        f"split: {report.split_name}  clips: {report.num_clips}",
        _table(
            ["probe", "overall", "sym", "nsym", "params", "head GFLOPs"],
            [[name, fmt_pct(report.overall_acc), fmt_pct(report.sym_acc),
              fmt_pct(report.nsym_acc), f"{report.param_count:,}",
              f"{report.probe_gflops_estimate:.3f}"]]),
    ]
    if report.corruption:
        rows = [[mode, render_sensitivity_line(report.overall_acc, r.accuracy),
                 fmt_pct(r.mirror_rate)]
                for mode, r in sorted(report.corruption.items())]
        parts.append(_table(["corruption", "accuracy", "mirror rate"], rows))
    parts.append(render_class_table(report, split))
    return "\n\n".join(parts)


def render_class_table(report: EvalReport, split=None) -> str:
    rows = []
    for c, name in enumerate(report.class_names):
        acc = fmt_pct(report.per_class_acc[c])
        if c in report.mirror_confusion:
            m = split.mirror(c) if split is not None else None
            confused = report.class_names[m] if m is not None else "mirror"
            rate = fmt_pct(report.mirror_confusion[c])
            kind = "mirror"
        elif c in report.top_confusion:
            top, r = report.top_confusion[c]
            confused, rate, kind = report.class_names[top], fmt_pct(r), "top"
        else:
            confused, rate, kind = "-", "-", "-"
        rows.append([name, acc, confused, rate, kind])
    return _table(["class", "accuracy", "confused with", "rate", "confusion"],
                  rows)


def render_confusion_matrix(report: EvalReport) -> str:
    headers = ["true\\pred"] + [str(i) for i in range(len(report.class_names))]
    rows = [[f"{i} {name}"] + [str(int(v)) for v in report.confusion[i]]
            for i, name in enumerate(report.class_names)]
    return _table(headers, rows)


def render_ablation_table(rows: Sequence[AblationRow]) -> str:
    body = [[r.name, fmt_pct(r.report.overall_acc), fmt_pct(r.report.sym_acc),
             fmt_pct(r.report.nsym_acc), f"{r.report.param_count:,}"]
            for r in rows]
    return _table(["variant", "overall", "sym", "nsym", "params"], body)


def render_multitask_report(report: MultiTaskReport) -> str:
    rows = [[name, fmt_pct(r.overall_acc), fmt_pct(r.sym_acc),
             fmt_pct(r.nsym_acc), f"{report.head_flops[name] / 1e9:.3f}"]
            for name, r in report.task_reports.items()]
    head = _table(["task", "overall", "sym", "nsym", "head GFLOPs"], rows)
    acct = (f"clips: {report.num_clips}  feature loads: {report.feature_loads}"
            f"  (one pass shared across {len(report.task_reports)} tasks)\n"
            f"cost model: total = shared + sum(heads) = "
            f"{report.shared_flops:.3e} + "
            f"{report.total_flops - report.shared_flops:.3e} = "
            f"{report.total_flops:.3e} FLOPs")
    return head + "\n\n" + acct


# ---------------------------------------------------------------------------
# delimited writers


def write_metrics_csv(path, report: EvalReport, name: str = "probe") -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["probe", "split", "overall_acc", "sym_acc", "nsym_acc",
                    "param_count", "head_gflops"])
        w.writerow([name, report.split_name, report.overall_acc,
                    report.sym_acc, report.nsym_acc, report.param_count,
                    report.probe_gflops_estimate])


def write_class_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["class_index", "class_name", "accuracy",
                    "mirror_confusion", "top_confusion_class",
                    "top_confusion_rate"])
        for c, name in enumerate(report.class_names):
            top = report.top_confusion.get(c)
            w.writerow([c, name, report.per_class_acc[c],
                        report.mirror_confusion.get(c, ""),
                        top[0] if top else "", top[1] if top else ""])


def write_confusion_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["true\\pred"] + list(report.class_names))
        for i, name in enumerate(report.class_names):
            w.writerow([name] + [int(v) for v in report.confusion[i]])


def write_sensitivity_csv(path, report: EvalReport) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["mode", "clean_acc", "corrupted_acc", "delta", "mirror_rate"])
        for mode, r in sorted(report.corruption.items()):
            w.writerow([mode, report.overall_acc, r.accuracy, r.delta,
                        r.mirror_rate])


def write_ablation_csv(path, rows: Sequence[AblationRow]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "overall_acc", "sym_acc", "nsym_acc",
                    "param_count"])
        for r in rows:
            w.writerow([r.name, r.report.overall_acc, r.report.sym_acc,
                        r.report.nsym_acc, r.report.param_count])


def write_history_csv(path, history: TrainHistory) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "train_loss", "val_acc", "lr"])
        for e, (loss, acc, lr) in enumerate(zip(history.train_loss,
                                                history.val_acc, history.lr)):
            w.writerow([e, loss, acc, lr])


def write_text(path, text: str) -> None:
    Path(path).write_text(text + "\n")
