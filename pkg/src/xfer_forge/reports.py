"""Table-shaped report emission (CSV for machines, markdown for humans).

Layout mirrors the experiment tables: one row per (lang, vocab) model,
task columns plus AVG. Metric scores arrive in natural ranges and are
printed x100 with 2 decimals; the gender parity score is already 0-100.
Undefined scores print as "-" (with a warning), never silently dropped.
"""

from __future__ import annotations

import csv
import io
import sys
from pathlib import Path

from .metrics import pair_average

MISSING = "-"


def fmt(score, scale=100.0):
    if score is None:
        return MISSING
    return f"{score * scale:.2f}"


def fmt_cell(score, scale=100.0):
    """Scalar or (m, mm)-style pair -> table cell text."""
    if isinstance(score, (tuple, list)):
        return "/".join(fmt(s, scale) for s in score)
    return fmt(score, scale)


def task_average(scores):
    """AVG column: pairs averaged first, then the arithmetic mean.

    Returns None when any component is undefined.
    """
    flat = []
    for s in scores:
        if isinstance(s, (tuple, list)):
            if any(v is None for v in s):
                return None
            flat.append(pair_average(s))
        elif s is None:
            return None
        else:
            flat.append(s)
    if not flat:
        return None
    return sum(flat) / len(flat)


def write_csv(path, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(row)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def score_table(model_rows, task_names, cell_scores, warn=None):
    """Rows of (lang, vocab, per-task cells, AVG); also returns AVG floats.

    cell_scores maps (model_key, task) -> scalar or pair (natural range).
    """
    warn = warn if warn is not None else (lambda msg: print(msg, file=sys.stderr))
    out_rows = []
    averages = {}
    for row in model_rows:
        key = row["key"]
        cells = []
        scores = []
        for task in task_names:
            score = cell_scores.get((key, task))
            if score is None:
                warn(f"warning: missing score for model={key} task={task}")
            cells.append(fmt_cell(score))
            scores.append(score)
        avg = task_average(scores)
        averages[key] = avg
        out_rows.append([row["lang"], row["vocab"], *cells, fmt(avg)])
    return out_rows, averages


def emit_score_csv(path, model_rows, task_names, cell_scores, warn=None):
    rows, averages = score_table(model_rows, task_names, cell_scores, warn=warn)
    write_csv(path, ["lang", "vocab", *task_names, "AVG"], rows)
    return averages


def emit_score_markdown(path, title, model_rows, task_names, cell_scores, warn=None):
    """Markdown twin of the score CSV; the best-AVG row is bolded."""
    rows, averages = score_table(model_rows, task_names, cell_scores, warn=warn)
    defined = {k: v for k, v in averages.items() if v is not None}
    best = max(defined, key=lambda k: defined[k]) if defined else None
    lines = [f"## {title}", ""]
    header = ["lang", "vocab", *task_names, "AVG"]
    lines.append("| " + " | ".join(header) + " |")
    lines.append("|" + "---|" * len(header))
    for row, model in zip(rows, model_rows):
        cells = [str(c) for c in row]
        if model["key"] == best:
            cells = [f"**{c}**" for c in cells]
        lines.append("| " + " | ".join(cells) + " |")
    lines.append("")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return best


def emit_delta_csv(path, delta_report, transferred):
    """Figure-2-style per-task deltas (x100), plus max over the
    transferred variants."""
    variants = sorted({v for t in delta_report.values() for v in t["per_variant"]})
    rows = []
    for task in sorted(delta_report):
        per = delta_report[task]["per_variant"]
        max_transferred = max(per[v] for v in transferred if v in per)
        rows.append(
            [task]
            + [fmt(per.get(v), 100.0) for v in variants]
            + [fmt(max_transferred, 100.0)]
        )
    write_csv(path, ["task", *(f"delta_{v}" for v in variants), "max_transferred"], rows)


def emit_deviation_csv(path, deviations):
    """Figure-3-style deviations from the group mean (x100)."""
    rows = []
    for (task, group) in sorted(deviations):
        for model in sorted(deviations[(task, group)]):
            rows.append([task, group, model, fmt(deviations[(task, group)][model], 100.0)])
    write_csv(path, ["task", "group", "model", "deviation"], rows)


def emit_curve_csv(path, curve):
    write_csv(path, ["step", "loss"], [[s, repr(float(l))] for s, l in curve])
