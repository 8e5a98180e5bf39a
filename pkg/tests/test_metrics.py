import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uccap import metrics as M
from uccap.exceptions import EmptyInput, LengthMismatch


@pytest.fixture
def vecs():
    r = np.random.default_rng(77)
    p = r.uniform(size=200)
    t = np.clip(p + r.normal(0, 0.2, 200), 0, 1)
    y = (r.uniform(size=200) < p).astype(float)
    return p, t, y


# ------------------------------------------------------------ brute oracles


def loop_brier(p, t):
    return sum((a - b) ** 2 for a, b in zip(p, t)) / len(p)


def loop_logloss(p, t):
    s = 0.0
    for a, b in zip(p, t):
        a = min(max(a, 1e-12), 1 - 1e-12)
        s -= b * math.log(a) + (1 - b) * math.log(1 - a)
    return s / len(p)


def hand_ece(p, t, n_bins=10):
    bins = [[] for _ in range(n_bins)]
    for a, b in zip(p, t):
        k = n_bins - 1 if a == 1.0 else int(a * n_bins)
        bins[k].append((a, b))
    total = 0.0
    for items in bins:
        if items:
            mp = sum(a for a, _ in items) / len(items)
            mt = sum(b for _, b in items) / len(items)
            total += len(items) / len(p) * abs(mp - mt)
    return total


def pair_auc(p, y):
    pos = [a for a, b in zip(p, y) if b]
    neg = [a for a, b in zip(p, y) if not b]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def test_brier_and_logloss_oracles(vecs):
    p, t, _ = vecs
    assert M.brier(p, t) == pytest.approx(loop_brier(p, t), abs=1e-12)
    assert M.logloss(p, t) == pytest.approx(loop_logloss(p, t), abs=1e-12)


def test_trivial_scores():
    assert M.brier([0.2, 0.7], [0.2, 0.7]) == 0.0
    assert M.logloss([0.5], [1.0]) == pytest.approx(math.log(2))
    assert M.logloss([0.0], [1.0]) == pytest.approx(-math.log(1e-12))


def test_empty_and_mismatch():
    with pytest.raises(EmptyInput):
        M.ece([], [])
    with pytest.raises(LengthMismatch):
        M.brier([0.1, 0.2], [0.1])


def test_ece_examples():
    assert M.ece([0.2] * 5 + [0.8] * 5, [0, 0, 0, 0, 1, 1, 1, 1, 1, 0]) == pytest.approx(0.0, abs=1e-15)
    assert M.ece([0.9] * 7, [0.0] * 7) == pytest.approx(0.9)


def test_ece_oracle(vecs):
    p, t, _ = vecs
    p = p.copy()
    p[:3] = [0.0, 1.0, 0.3]  # exact bin edges
    assert M.ece(p, t) == pytest.approx(hand_ece(p, t), abs=1e-12)
    assert M.ece(p, t, 7) == pytest.approx(hand_ece(p, t, 7), abs=1e-12)


def test_reliability_bins(vecs):
    p, t, _ = vecs
    bins = M.reliability_bins(p, t)
    assert sum(b[4] for b in bins) == p.size
    means = [b[2] for b in bins]
    assert means == sorted(means)
    for lo, hi, mp, _, _ in bins:
        assert lo <= mp <= hi


def test_decision_rate_examples():
    r = M.decision_rates([0, 1, 1, 0], [0, 1, 1, 0])
    assert (r.false_accept, r.false_reject, r.accuracy) == (0.0, 0.0, 1.0)
    r = M.decision_rates([0.0] * 4, [1, 1, 0, 0])
    assert (r.false_accept, r.false_reject) == (0.5, 0.0)
    assert math.isnan(r.precision) and r.f1 == 0.0


def test_decision_rates_oracle(vecs):
    p, _, y = vecs
    for alpha in (0.1, 0.5, 0.73):
        r = M.decision_rates(p, y, alpha)
        tp = sum(1 for a, b in zip(p, y) if a > alpha and b == 1)
        fp = sum(1 for a, b in zip(p, y) if a > alpha and b == 0)
        fn = sum(1 for a, b in zip(p, y) if a <= alpha and b == 1)
        tn = len(p) - tp - fp - fn
        assert (r.tp, r.fp, r.fn, r.tn) == (tp, fp, fn, tn)
        assert r.tp + r.fp + r.fn + r.tn == len(p)
        assert r.false_accept == fn / len(p) and r.false_reject == fp / len(p)
        prec, rec = tp / (tp + fp), tp / (tp + fn)
        assert r.f1 == pytest.approx(2 * prec * rec / (prec + rec), abs=1e-12)


def test_boundary_pred_equal_alpha_accepts():
    r = M.decision_rates([0.5], [1.0], 0.5)
    assert r.fn == 1


def test_roc_examples():
    assert M.roc_auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert M.roc_auc([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0
    assert math.isnan(M.roc_auc([0.1, 0.2], [1, 1]))
    assert math.isnan(M.pr_auc([0.1, 0.2], [0, 0]))


def test_roc_pair_counting_oracle():
    r = np.random.default_rng(20)
    p = np.round(r.uniform(size=20), 1)  # rounding forces ties
    y = (r.uniform(size=20) < 0.5).astype(int)
    assert M.roc_auc(p, y) == pytest.approx(pair_auc(p, y), abs=1e-12)


def test_pr_auc_step_oracle():
    r = np.random.default_rng(21)
    p = r.uniform(size=20)
    y = (r.uniform(size=20) < 0.4).astype(int)
    order = np.argsort(-p)
    tp, ap, npos = 0, 0.0, y.sum()
    for k, i in enumerate(order, 1):
        if y[i]:
            tp += 1
            ap += tp / k / npos
    assert M.pr_auc(p, y) == pytest.approx(ap, abs=1e-12)
    assert M.pr_auc([0.1, 0.9, 0.8, 0.2], [0, 1, 1, 0]) == 1.0


def test_pr_curve_ties_collapse():
    thr, prec, rec = M.pr_curve([0.5, 0.5, 0.2], [1, 0, 1])
    np.testing.assert_array_equal(thr, [0.5, 0.2])
    np.testing.assert_allclose(prec, [0.5, 2 / 3])
    np.testing.assert_allclose(rec, [0.5, 1.0])


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6))
def test_invariances(seed):
    r = np.random.default_rng(seed)
    p = r.uniform(size=40)
    t = r.uniform(size=40)
    y = (r.uniform(size=40) < 0.5).astype(int)
    assert M.brier(p, t) == pytest.approx(M.brier(1 - p, 1 - t), abs=1e-12)
    assert 0.0 <= M.ece(p, t) <= 1.0
    assert M.ece(p, p) == pytest.approx(0.0, abs=1e-12)
    if 0 < y.sum() < y.size:
        assert M.roc_auc(np.exp(3 * p), y) == pytest.approx(M.roc_auc(p, y), abs=1e-12)


def test_pearson():
    r = np.random.default_rng(0)
    a, b = r.normal(size=30), r.normal(size=30)
    assert M.pearson(a, b) == pytest.approx(np.corrcoef(a, b)[0, 1], abs=1e-12)
    assert math.isnan(M.pearson([1.0, 1.0], [0.0, 1.0]))


# ------------------------------------------------------------- near subset


def test_near_filter_boundaries():
    recs = [{"cpk_hat": 1.43}, {"cpk_hat": 1.44}, {"cpk_hat": 1.23}, {"cpk_hat": 1.22}]
    kept = M.near_filter(recs, 1.33, 0.1)
    assert [r["cpk_hat"] for r in kept] == [1.43, 1.23]


def test_near_filter_modes():
    r = np.random.default_rng(4)
    recs = [SimpleNamespace(cpk_hat=a, cpk_true=b) for a, b in r.uniform(1.0, 1.7, (100, 2))]
    est = M.near_filter(recs, 1.33, 0.1, "by_estimate")
    true = M.near_filter(recs, 1.33, 0.1, "by_true")
    assert est == [x for x in recs if abs(x.cpk_hat - 1.33) <= 0.1]
    assert true == [x for x in recs if abs(x.cpk_true - 1.33) <= 0.1]
    with pytest.raises(ValueError):
        M.near_filter(recs, mode="nearest")


# ------------------------------------------------------------------ Platt


def test_platt_fixed_point():
    r = np.random.default_rng(8)
    p = r.uniform(0.02, 0.98, 4000)
    y = (r.uniform(size=p.size) < p).astype(float)
    m = M.platt_recalibrate(p, y)
    assert m.a == pytest.approx(1.0, abs=0.05)
    assert m.b == pytest.approx(0.0, abs=0.05)


def test_platt_constant_half():
    p = np.random.default_rng(9).uniform(0.05, 0.95, 200)
    m = M.platt_recalibrate(p, np.full(200, 0.5))
    np.testing.assert_allclose(m(p), 0.5, atol=1e-4)


def test_platt_improves_loss():
    r = np.random.default_rng(10)
    truth = r.uniform(0.05, 0.95, 500)
    distorted = 1 / (1 + np.exp(-3 * np.log(truth / (1 - truth)) - 0.5))
    m = M.platt_recalibrate(distorted, truth)
    assert M.logloss(m(distorted), truth) < M.logloss(distorted, truth)
    assert m.a == pytest.approx(1 / 3, abs=1e-3)


# ------------------------------------------------------------------ report


def test_calibration_report(vecs):
    p, t, y = vecs
    near = np.arange(p.size) % 3 == 0
    rep = M.calibration_report(p, t, y, near)
    assert rep.n == p.size and rep.n_near == near.sum()
    assert rep.brier == M.brier(p, t)
    assert rep.near_ece == M.ece(p[near], t[near])
    for name in ("accuracy", "precision", "recall", "f1", "false_accept_rate", "false_reject_rate"):
        assert 0.0 <= getattr(rep, name) <= 1.0
    assert sum(b["count"] for b in rep.to_dict()["reliability_bins"]) == p.size


def test_report_single_class_serializes_none():
    d = M.calibration_report([0.1, 0.2], [0.0, 0.0]).to_dict()
    assert d["roc_auc"] is None and d["pr_auc"] is None
