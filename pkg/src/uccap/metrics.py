"""Probability-quality and decision-quality metrics.

Targets may be soft (in [0, 1]) for the probability scores; ranking and
decision metrics take hard 0/1 labels.  AUCs of a single-class label vector
are undefined and returned as NaN.
"""

import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata

from .exceptions import EmptyInput, LengthMismatch
from .uncertainty import logit

PRED_CLIP = 1e-12
DEFAULT_BINS = 10


def _pair(pred, target):
    p = np.asarray(pred, dtype=float).ravel()
    t = np.asarray(target, dtype=float).ravel()
    if p.shape != t.shape:
        raise LengthMismatch(f"pred has {p.size} items, target {t.size}")
    if p.size == 0:
        raise EmptyInput("no items to score")
    return p, t


def brier(pred, target):
    p, t = _pair(pred, target)
    return float(np.mean((p - t) ** 2))


def logloss(pred, target):
    p, t = _pair(pred, target)
    p = np.clip(p, PRED_CLIP, 1.0 - PRED_CLIP)
    return float(-np.mean(t * np.log(p) + (1.0 - t) * np.log1p(-p)))


def _bin_index(p, n_bins):
    # equal-width bins on [0, 1]; the last bin is closed on the right
    return np.minimum((p * n_bins).astype(int), n_bins - 1)


def reliability_bins(pred, target, n_bins=DEFAULT_BINS):
    """Non-empty bins as ``(bin_lo, bin_hi, mean_pred, mean_target, count)``."""
    p, t = _pair(pred, target)
    idx = _bin_index(np.clip(p, 0.0, 1.0), n_bins)
    out = []
    for b in range(n_bins):
        m = idx == b
        c = int(m.sum())
        if c:
            out.append((b / n_bins, (b + 1) / n_bins, float(p[m].mean()), float(t[m].mean()), c))
    return out


def ece(pred, target, n_bins=DEFAULT_BINS):
    """Expected calibration error over equal-width bins; empty bins skipped."""
    p, _ = _pair(pred, target)
    return float(sum(c / p.size * abs(mp - mt) for _, _, mp, mt, c in reliability_bins(pred, target, n_bins)))


@dataclass(frozen=True)
class DecisionRates:
    accuracy: float
    false_accept: float
    false_reject: float
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    tn: int
    fn: int


def decision_rates(pred, y_hard, alpha_decision=0.5):
    """Accept iff ``pred <= alpha``; "reject" is the positive prediction.

    False accept/reject rates are fractions of all items.  Precision is NaN
    when nothing is rejected, F1 is 0 when precision and recall are both 0.
    """
    p, y = _pair(pred, y_hard)
    y = y.astype(bool)
    reject = p > alpha_decision
    tp = int(np.sum(reject & y))
    fp = int(np.sum(reject & ~y))
    tn = int(np.sum(~reject & ~y))
    fn = int(np.sum(~reject & y))
    n = p.size
    precision = tp / (tp + fp) if tp + fp else float("nan")
    recall = tp / (tp + fn) if tp + fn else float("nan")
    if tp == 0:
        f1 = 0.0 if (tp + fp + fn) else float("nan")
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return DecisionRates((tp + tn) / n, fn / n, fp / n, precision, recall, f1, tp, fp, tn, fn)


def roc_auc(pred, y_hard):
    """Mann-Whitney estimate with midranks for ties; NaN for a single class."""
    p, y = _pair(pred, y_hard)
    y = y.astype(bool)
    n_pos, n_neg = int(y.sum()), int((~y).sum())
    if n_pos == 0 or n_neg == 0:
        return float("nan")
    ranks = rankdata(p)
    return float((ranks[y].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def pr_curve(pred, y_hard):
    """Precision/recall at each distinct threshold, descending.

    Returns ``(thresholds, precision, recall)``.
    """
    p, y = _pair(pred, y_hard)
    order = np.argsort(-p, kind="mergesort")
    p, y = p[order], y[order].astype(bool)
    last = np.r_[np.flatnonzero(np.diff(p)), p.size - 1]  # last index of each tie block
    tp = np.cumsum(y)[last]
    fp = (last + 1) - tp
    n_pos = int(y.sum())
    recall = tp / n_pos if n_pos else np.full(tp.shape, np.nan)
    return p[last], tp / (tp + fp), recall


def pr_auc(pred, y_hard):
    """Average precision: step-wise sum of precision times recall increments."""
    _, y = _pair(pred, y_hard)
    if y.all() or not y.any():
        return float("nan")
    _, precision, recall = pr_curve(pred, y_hard)
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


def pearson(pred, target):
    p, t = _pair(pred, target)
    if p.size < 2 or np.ptp(p) == 0 or np.ptp(t) == 0:
        return float("nan")
    return float(np.corrcoef(p, t)[0, 1])


def near_filter(records, c0=1.33, epsilon=0.1, mode="by_estimate"):
    """Records within ``epsilon`` of ``c0`` (inclusive).

    ``records`` are objects or mappings with ``cpk_hat`` (``by_estimate``) or
    ``cpk_true`` (``by_true``).
    """
    if mode not in ("by_estimate", "by_true"):
        raise ValueError(f"unknown mode {mode!r}")
    key = "cpk_hat" if mode == "by_estimate" else "cpk_true"

    def get(r):
        return r[key] if isinstance(r, dict) else getattr(r, key)

    return [r for r in records if abs(get(r) - c0) <= epsilon + 1e-12]


def near_mask(cpk, c0=1.33, epsilon=0.1):
    return np.abs(np.asarray(cpk, dtype=float) - c0) <= epsilon + 1e-12


# ------------------------------------------------------------ recalibration


class PlattMap:
    """Affine recalibration in logit space: ``sigmoid(a * logit(p) + b)``."""

    def __init__(self, a=1.0, b=0.0):
        self.a = a
        self.b = b

    def __call__(self, pred):
        z = logit(np.clip(np.asarray(pred, dtype=float), PRED_CLIP, 1.0 - PRED_CLIP))
        return np.clip(1.0 / (1.0 + np.exp(-(self.a * z + self.b))), PRED_CLIP, 1.0 - PRED_CLIP)

    def __repr__(self):
        return f"PlattMap(a={self.a!r}, b={self.b!r})"


def platt_recalibrate(pred_train, target_train, max_epochs=20000, tol=1e-10):
    """Fit a :class:`PlattMap` by gradient descent on soft cross-entropy."""
    from .losses import residual_objective
    from .model import _lambda_max, gradient_descent

    p, t = _pair(pred_train, target_train)
    z = logit(np.clip(p, PRED_CLIP, 1.0 - PRED_CLIP))
    # a*z + b is the free-anchor model with no features and unit residual scale
    Xs = np.zeros((p.size, 0))
    w = np.ones_like(p)
    D = np.column_stack([np.ones_like(z), z])
    lip = 0.25 * _lambda_max(D, w) / p.size

    def fun(q):
        v, g = residual_objective(q, Xs, z, t, w, "soft_ce", 0.0, 1.0, True)
        return v / p.size, g / p.size

    q, _, _ = gradient_descent(fun, np.array([0.0, 1.0]), lip, max_epochs=max_epochs, tol=tol)
    return PlattMap(a=float(q[1]), b=float(q[0]))


# ------------------------------------------------------------------ reports


@dataclass
class CalibrationReport:
    n: int
    brier: float
    logloss: float
    ece: float
    correlation: float
    roc_auc: float
    pr_auc: float
    accuracy: float
    precision: float
    recall: float
    f1: float
    false_accept_rate: float
    false_reject_rate: float
    n_near: int = 0
    near_brier: float = float("nan")
    near_logloss: float = float("nan")
    near_ece: float = float("nan")
    near_recall: float = float("nan")
    near_accuracy: float = float("nan")
    reliability_bins: list = field(default_factory=list)

    def to_dict(self):
        d = asdict(self)
        d["reliability_bins"] = [
            {"bin_lo": lo, "bin_hi": hi, "mean_pred": mp, "mean_target": mt, "count": c}
            for lo, hi, mp, mt, c in self.reliability_bins
        ]
        return {k: (None if isinstance(v, float) and math.isnan(v) else v) for k, v in d.items()}


def calibration_report(pred, target, y_hard=None, near=None, alpha_decision=0.5, n_bins=DEFAULT_BINS):
    """All metrics for one prediction vector.

    ``target`` is the probability target (soft or hard); ``y_hard`` defaults to
    ``target >= 0.5``.  ``near`` is a boolean mask selecting the
    near-threshold subset.
    """
    p, t = _pair(pred, target)
    y = (t >= 0.5).astype(float) if y_hard is None else np.asarray(y_hard, dtype=float)
    r = decision_rates(p, y, alpha_decision)
    rep = CalibrationReport(
        n=p.size,
        brier=brier(p, t),
        logloss=logloss(p, t),
        ece=ece(p, t, n_bins),
        correlation=pearson(p, t),
        roc_auc=roc_auc(p, y),
        pr_auc=pr_auc(p, y),
        accuracy=r.accuracy,
        precision=r.precision,
        recall=r.recall,
        f1=r.f1,
        false_accept_rate=r.false_accept,
        false_reject_rate=r.false_reject,
        reliability_bins=reliability_bins(p, t, n_bins),
    )
    if near is not None:
        m = np.asarray(near, dtype=bool)
        rep.n_near = int(m.sum())
        if m.any():
            rn = decision_rates(p[m], y[m], alpha_decision)
            rep.near_brier = brier(p[m], t[m])
            rep.near_logloss = logloss(p[m], t[m])
            rep.near_ece = ece(p[m], t[m], n_bins)
            rep.near_recall = rn.recall
            rep.near_accuracy = rn.accuracy
    return rep
