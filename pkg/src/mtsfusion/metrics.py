"""Classification figures of merit and mean +/- std aggregation across splits."""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass

import numpy as np

METRIC_NAMES = ("accuracy", "specificity", "sensitivity", "roc_auc")


class MetricError(ValueError):
    pass


def _check_binary(labels) -> np.ndarray:
    y = np.asarray(labels).astype(int)
    if y.ndim != 1:
        raise MetricError("labels must be one-dimensional")
    n_pos = int(y.sum())
    if n_pos == 0 or n_pos == len(y):
        raise MetricError("both classes must be present")
    return y


def roc_auc(scores, labels) -> float:
    """Area under the ROC curve by trapezoidal integration.

    Tied scores produce a diagonal segment, which is the same as counting a
    tied positive/negative pair as half a win.
    """
    y = _check_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    # indices where the threshold changes (last element of each tie block)
    cut = np.r_[np.flatnonzero(np.diff(s)), len(s) - 1]
    tp = np.cumsum(y)[cut].astype(np.float64)
    fp = (cut + 1 - tp).astype(np.float64)
    tp = np.r_[0.0, tp]
    fp = np.r_[0.0, fp]
    area = np.sum((fp[1:] - fp[:-1]) * (tp[1:] + tp[:-1])) / 2.0
    return float(area / (tp[-1] * fp[-1]))


def roc_auc_pairwise(scores, labels) -> float:
    """Mann-Whitney pair count; O(n_pos * n_neg), used as the independent reference."""
    y = _check_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    pos, neg = s[y == 1], s[y == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return float(wins / (len(pos) * len(neg)))


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    sensitivity: float
    specificity: float
    roc_auc: float
    threshold: float
    tp: int
    tn: int
    fp: int
    fn: int

    def as_percent(self) -> dict[str, float]:
        return {m: round(100.0 * getattr(self, m), 2) for m in METRIC_NAMES}


def confusion_metrics(scores, labels, threshold: float = 0.5) -> EvalResult:
    y = _check_binary(labels)
    s = np.asarray(scores, dtype=np.float64)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    fp = int(np.sum(pred & (y == 0)))
    return EvalResult(
        accuracy=(tp + tn) / len(y),
        sensitivity=tp / (tp + fn),
        specificity=tn / (tn + fp),
        roc_auc=roc_auc(s, y),
        threshold=threshold,
        tp=tp, tn=tn, fp=fp, fn=fn,
    )


def evaluate(scores, labels, threshold: float = 0.5) -> EvalResult:
    return confusion_metrics(scores, labels, threshold)


def aggregate(results: list[EvalResult]) -> dict[str, tuple[float, float]]:
    """Mean and sample standard deviation (n-1) of each metric, in percent."""
    if not results:
        raise MetricError("need at least one result")
    out = {}
    for m in METRIC_NAMES:
        v = np.array([100.0 * getattr(r, m) for r in results])
        sd = float(v.std(ddof=1)) if len(v) > 1 else 0.0
        out[m] = (float(v.mean()), sd)
    return out


def mean_std(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=float)
    return float(v.mean()), (float(v.std(ddof=1)) if len(v) > 1 else 0.0)


def results_table(rows: dict[str, list[EvalResult]]) -> list[dict]:
    """One record per model: ``mean`` and ``std`` per metric, two decimals."""
    table = []
    for model, results in rows.items():
        agg = aggregate(results)
        rec = {"model": model, "n_splits": len(results)}
        for m in METRIC_NAMES:
            rec[m] = {"mean": round(agg[m][0], 2), "std": round(agg[m][1], 2)}
        table.append(rec)
    return table


def write_table_json(table: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"schema_version": 1, "results": table}, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_table_csv(table: list[dict], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "n_splits", *(f"{m}_{k}" for m in METRIC_NAMES for k in ("mean", "std"))])
        for rec in table:
            w.writerow([rec["model"], rec["n_splits"],
                        *(f"{rec[m][k]:.2f}" for m in METRIC_NAMES for k in ("mean", "std"))])


def eval_to_dict(r: EvalResult) -> dict:
    return asdict(r)
