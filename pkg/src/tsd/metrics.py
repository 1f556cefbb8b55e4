"""Evaluation metrics for sentiment regression and intent classification.

Regression metrics follow the usual sentiment-score conventions:

* MAE on raw predictions;
* ACC7 compares 7-way buckets of round-to-nearest (ties away from zero)
  scores clipped to [-3, 3];
* ACC2 / F1 compare negative against positive.  With ``exclude_zero`` the
  samples whose label is exactly 0 are dropped; with ``neg_vs_nonneg`` zero
  counts as non-negative.  F1 is the support-weighted mean of the per-class
  F1 scores on that same subset.

Accuracies and F1 are percentages.
"""

from __future__ import annotations

import numpy as np

from .data import bucket7
from .errors import ContractError


def _f1_per_class(pred: np.ndarray, true: np.ndarray, classes) -> tuple[np.ndarray, np.ndarray]:
    f1, support = [], []
    for c in classes:
        tp = np.sum((pred == c) & (true == c))
        fp = np.sum((pred == c) & (true != c))
        fn = np.sum((pred != c) & (true == c))
        denom = 2 * tp + fp + fn
        f1.append(2 * tp / denom if denom else 0.0)
        support.append(np.sum(true == c))
    return np.array(f1, dtype=np.float64), np.array(support, dtype=np.float64)


def regression_metrics(preds, labels, acc2_mode: str = "exclude_zero") -> dict:
    preds = np.asarray(preds, dtype=np.float64).reshape(-1)
    labels = np.asarray(labels, dtype=np.float64).reshape(-1)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ContractError(f"metrics need equal, nonempty inputs, got {preds.shape} and {labels.shape}")
    out = {
        "mae": float(np.mean(np.abs(preds - labels))),
        "mse": float(np.mean((preds - labels) ** 2)),
        "acc7": float(100.0 * np.mean(bucket7(preds) == bucket7(labels))),
    }
    if acc2_mode == "exclude_zero":
        keep = labels != 0
        pb, lb = preds[keep] > 0, labels[keep] > 0
    elif acc2_mode == "neg_vs_nonneg":
        pb, lb = preds >= 0, labels >= 0
    else:
        raise ContractError(f"unknown acc2_mode {acc2_mode!r}")
    out["acc2_empty"] = lb.size == 0
    if lb.size == 0:
        out["acc2"] = out["f1"] = 0.0
        return out
    out["acc2"] = float(100.0 * np.mean(pb == lb))
    f1, support = _f1_per_class(pb, lb, (False, True))
    out["f1"] = float(100.0 * np.sum(f1 * support) / support.sum())
    return out


def classification_metrics(logits_or_preds, labels, n_classes: int | None = None) -> dict:
    """Accuracy and macro-F1 (also macro precision / recall) over class indices."""
    arr = np.asarray(logits_or_preds)
    labels = np.asarray(labels).astype(np.int64).reshape(-1)
    preds = arr.argmax(axis=1) if arr.ndim == 2 else arr.astype(np.int64)
    if preds.size == 0 or preds.shape != labels.shape:
        raise ContractError(f"metrics need equal, nonempty inputs, got {preds.shape} and {labels.shape}")
    n_classes = n_classes or int(max(preds.max(), labels.max()) + 1)
    classes = range(n_classes)
    f1, support = _f1_per_class(preds, labels, classes)
    present = support > 0
    prec, rec = [], []
    for c in classes:
        pc, tc = np.sum(preds == c), np.sum(labels == c)
        tp = np.sum((preds == c) & (labels == c))
        prec.append(tp / pc if pc else 0.0)
        rec.append(tp / tc if tc else 0.0)
    return {
        "acc": float(100.0 * np.mean(preds == labels)),
        "macro_f1": float(100.0 * f1[present].mean()),
        "precision": float(100.0 * np.mean(np.array(prec)[present])),
        "recall": float(100.0 * np.mean(np.array(rec)[present])),
    }


def compute_metrics(preds, labels, mode: str, acc2_mode: str = "exclude_zero", n_classes: int | None = None) -> dict:
    if mode == "regression":
        return regression_metrics(preds, labels, acc2_mode)
    if mode == "classification":
        return classification_metrics(preds, labels, n_classes)
    raise ContractError(f"unknown task mode {mode!r}")
