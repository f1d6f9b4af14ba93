"""Scalar task metrics, multi-seed aggregation, and delta/deviation reports.

Correlations and classification metrics are returned in their natural
ranges ([0,1] or [-1,1]); report emission multiplies by 100. A zero-
variance input to a correlation yields None ("undefined"), never 0 --
near-zero scores must stay distinguishable from degenerate runs. The
gender parity score is already on the 0-100 scale.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

METRIC_KINDS = ("accuracy", "f1_binary", "matthews", "pearson", "spearman", "gender_parity")


def _check_lengths(predictions, golds):
    if len(predictions) != len(golds):
        raise ValueError(f"length mismatch: {len(predictions)} vs {len(golds)}")
    if len(golds) == 0:
        raise ValueError("empty inputs")


def accuracy(predictions, golds):
    _check_lengths(predictions, golds)
    return sum(p == g for p, g in zip(predictions, golds)) / len(golds)


def _positive_label(predictions, golds, positive):
    if positive is not None:
        return positive
    labels = sorted(set(golds) | set(predictions))
    if len(labels) > 2:
        raise ValueError(f"binary metric got {len(labels)} labels")
    return labels[-1]


def _confusion(predictions, golds, positive):
    tp = fp = fn = tn = 0
    for p, g in zip(predictions, golds):
        if p == positive and g == positive:
            tp += 1
        elif p == positive:
            fp += 1
        elif g == positive:
            fn += 1
        else:
            tn += 1
    return tp, fp, fn, tn


def f1_binary(predictions, golds, positive=None):
    _check_lengths(predictions, golds)
    tp, fp, fn, _ = _confusion(predictions, golds, _positive_label(predictions, golds, positive))
    if 2 * tp + fp + fn == 0:
        return 0.0
    return 2 * tp / (2 * tp + fp + fn)


def matthews(predictions, golds, positive=None):
    _check_lengths(predictions, golds)
    tp, fp, fn, tn = _confusion(predictions, golds, _positive_label(predictions, golds, positive))
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    return (tp * tn - fp * fn) / math.sqrt(denom)


def pearson(x, y):
    _check_lengths(x, y)
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float((xc * xc).sum()) * float((yc * yc).sum()))
    if denom == 0.0:
        return None  # undefined for zero-variance input
    return float((xc * yc).sum()) / denom


def rankdata_average(values):
    """Ranks starting at 1, ties assigned the average of their positions."""
    values = np.asarray(values, dtype=np.float64)
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=np.float64)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y):
    _check_lengths(x, y)
    return pearson(rankdata_average(x), rankdata_average(y))


def compute_metric(kind, predictions, golds, positive=None):
    if kind == "accuracy":
        return accuracy(predictions, golds)
    if kind == "f1_binary":
        return f1_binary(predictions, golds, positive)
    if kind == "matthews":
        return matthews(predictions, golds, positive)
    if kind == "pearson":
        return pearson(predictions, golds)
    if kind == "spearman":
        return spearman(predictions, golds)
    raise ValueError(f"unknown metric kind {kind!r}")


def gender_parity(predictions, pair_ids, golds=None):
    """Minimal-pair agreement on the 0-100 scale.

    gps = 100 x (pairs whose two predictions agree) / pairs. When golds
    are supplied, accuracy (x100) over all records is reported alongside.
    """
    _check_lengths(predictions, pair_ids)
    groups = {}
    for pred, pid in zip(predictions, pair_ids):
        groups.setdefault(pid, []).append(pred)
    for pid, preds in groups.items():
        if len(preds) != 2:
            raise ValueError(f"pair_id {pid!r} appears {len(preds)} times, expected 2")
    agree = sum(1 for preds in groups.values() if preds[0] == preds[1])
    out = {"gps": 100.0 * agree / len(groups)}
    if golds is not None:
        out["accuracy"] = 100.0 * accuracy(predictions, golds)
    return out


@dataclass(frozen=True)
class Aggregate:
    mean: float
    stdev: float | None  # sample stdev (n-1); None when n == 1
    values: tuple

    def fmt(self):
        sd = "n/a" if self.stdev is None else f"{self.stdev:.2f}"
        return f"{self.mean:.2f} ({sd})"


def aggregate(values):
    """Mean and sample standard deviation (n-1 denominator)."""
    values = list(values)
    if not values:
        raise ValueError("aggregate of empty input")
    if any(v is None for v in values):
        raise ValueError("aggregate over undefined scores")
    mean = sum(values) / len(values)
    if len(values) == 1:
        return Aggregate(mean=mean, stdev=None, values=tuple(values))
    var = sum((v - mean) ** 2 for v in values) / (len(values) - 1)
    return Aggregate(mean=mean, stdev=math.sqrt(var), values=tuple(values))


def pair_average(score):
    """Average matched/mismatched-style score pairs; scalars pass through."""
    if isinstance(score, (tuple, list)):
        return sum(score) / len(score)
    return score


def delta_report(variant_scores, baseline_scores):
    """Per-task deltas of each variant against the baseline, plus the max.

    Scores may be (m, mm)-style pairs; those are averaged before the
    difference is taken.
    """
    tasks = set(baseline_scores)
    for name, scores in variant_scores.items():
        if set(scores) != tasks:
            missing = set(scores) ^ tasks
            raise ValueError(f"variant {name!r} task set mismatch: {sorted(missing)}")
    report = {}
    for task in sorted(tasks):
        base = pair_average(baseline_scores[task])
        deltas = {
            name: pair_average(scores[task]) - base
            for name, scores in variant_scores.items()
        }
        report[task] = {"per_variant": deltas, "max": max(deltas.values())}
    return report


def average_difference_report(group_scores):
    """Deviation of each model from its group mean, per (task, group)."""
    report = {}
    for key, scores in group_scores.items():
        if not scores:
            raise ValueError(f"empty group {key!r}")
        mean = sum(scores.values()) / len(scores)
        report[key] = {model: value - mean for model, value in scores.items()}
    return report
