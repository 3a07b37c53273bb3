from typing import Optional, Tuple

import numpy as np
from scipy.stats import rankdata

from models.predictor import ClassifierReport


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def confusion_counts(predicted, labels) -> Tuple[int, int, int, int]:
    """``(tn, fp, fn, tp)`` with label 1 = accepted as the positive class."""
    predicted = np.asarray(predicted, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    tp = int(np.sum(predicted & labels))
    fp = int(np.sum(predicted & ~labels))
    fn = int(np.sum(~predicted & labels))
    tn = int(np.sum(~predicted & ~labels))
    return tn, fp, fn, tp


def classifier_report(
    tn: int, fp: int, fn: int, tp: int, auc: Optional[float] = None, threshold: Optional[float] = None
) -> ClassifierReport:
    recall = _ratio(tp, tp + fn)
    fpr = _ratio(fp, fp + tn)
    specificity = 1.0 - fpr if fp + tn else 0.0
    return ClassifierReport(
        tn=tn,
        fp=fp,
        fn=fn,
        tp=tp,
        accuracy=_ratio(tp + tn, tn + fp + fn + tp),
        auc=auc,
        recall_accepted=recall,
        specificity=specificity,
        fpr=fpr,
        balanced_accuracy=(recall + specificity) / 2.0,
        threshold=threshold,
    )


def roc_auc(scores, labels) -> Optional[float]:
    """Mann-Whitney AUC with midranks for ties; ``None`` when a class is missing."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    n_pos = int(labels.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = rankdata(scores)
    return float((ranks[labels].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def select_threshold(scores, labels, fpr_target: float) -> float:
    """Highest-recall threshold whose false-positive rate stays within ``fpr_target``.

    Tokens with ``score >= threshold`` are predicted accept. Ties in recall go to the
    lower false-positive rate, then to the higher threshold.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos

    order = np.argsort(-scores, kind="stable")
    s = scores[order]
    tp = np.cumsum(labels[order])
    fp = np.cumsum(1.0 - labels[order])
    last_of_run = np.r_[s[1:] != s[:-1], True]
    thresholds = s[last_of_run]
    tp, fp = tp[last_of_run], fp[last_of_run]

    fpr = fp / n_neg if n_neg else np.zeros_like(fp)
    ok = fpr <= fpr_target + 1e-12
    if not ok.any():
        # accept nothing
        return float(min(1.0, np.nextafter(s[0], np.inf)))
    recall = tp / n_pos if n_pos else np.zeros_like(tp)
    candidates = np.flatnonzero(ok)
    best = max(candidates, key=lambda i: (recall[i], -fpr[i], thresholds[i]))
    return float(thresholds[best])
