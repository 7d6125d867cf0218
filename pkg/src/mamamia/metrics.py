"""Rank AUC, ROC curves and confidence-weighted membership advantage."""

from __future__ import annotations

import numpy as np
from scipy.stats import rankdata

from .errors import MetricError


def _prepare(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).reshape(-1)
    y = np.asarray(labels).reshape(-1)
    if s.shape != y.shape:
        raise MetricError("scores and labels differ in length")
    if not np.all((y == 0) | (y == 1)):
        raise MetricError("labels must be 0 or 1")
    y = y.astype(np.int64)
    if y.min(initial=1) == y.max(initial=0) or y.size == 0:
        raise MetricError("both classes must be present")
    if np.any(np.isnan(s)):
        raise MetricError("scores contain NaN")
    return s, y


def auc(scores, labels) -> float:
    """Mann-Whitney statistic; tied pairs count one half."""
    s, y = _prepare(scores, labels)
    ranks = rankdata(s)
    n1 = int(y.sum())
    n0 = y.size - n1
    return float((ranks[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def roc(scores, labels) -> list[tuple[float, float]]:
    """(fpr, tpr) points for thresholds at every distinct score, from (0,0) to (1,1)."""
    s, y = _prepare(scores, labels)
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    tpr = np.r_[0.0, tp / y.sum()]
    fpr = np.r_[0.0, fp / (y.size - y.sum())]
    return list(zip(fpr.tolist(), tpr.tolist()))


def roc_area(curve) -> float:
    pts = np.asarray(curve, dtype=float)
    trapezoid = getattr(np, "trapezoid", None) or np.trapz
    return float(trapezoid(pts[:, 1], pts[:, 0]))


def membership_advantage(probabilities, labels) -> float:
    """(tpr - fpr + 1) / 2 with each prediction weighted by 2|0.5 - p|.

    A prediction is "member" when p > 0.5. A class whose total weight is
    zero contributes a rate of 0.
    """
    p, y = _prepare(probabilities, labels)
    if np.any((p < 0) | (p > 1)):
        raise MetricError("probabilities must lie in [0, 1]")
    w = 2.0 * np.abs(0.5 - p)
    pred = p > 0.5
    pos_w = w[y == 1].sum()
    neg_w = w[y == 0].sum()
    tpr = w[(y == 1) & pred].sum() / pos_w if pos_w > 0 else 0.0
    fpr = w[(y == 0) & pred].sum() / neg_w if neg_w > 0 else 0.0
    return float((tpr - fpr + 1.0) / 2.0)
