"""Acceptance suite: one PASS/FAIL line per criterion.

Run with pytest (lines are collected into the terminal summary) or directly
with ``python tests/test_acceptance.py``.
"""

import math
import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import ACCEPTANCE_LINES  # noqa: E402

from uccap import losses, metrics  # noqa: E402
from uccap.capability import CapabilityEstimate, DimensionSample, SpecLimits, estimate_capability  # noqa: E402
from uccap.decision import decision_chain  # noqa: E402
from uccap.features import N_FEATURES  # noqa: E402
from uccap.model import TrainConfig, TrainingSet, baseline_model, predict, train  # noqa: E402
from uccap.simulation import (  # noqa: E402
    SimConfig,
    SimProcess,
    estimation_error_study,
    leakfree_comparison,
    oracle_risk,
    run_nested_mc,
    synthetic_leakfree_dataset,
    calibration_ordering,
)
from uccap.uncertainty import baseline_risk, bootstrap_se  # noqa: E402

pytestmark = pytest.mark.acceptance

C0 = 1.33


def record(number, title, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} [{number:02d}] {title}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


# ------------------------------------------------------------------ 1


def test_01_risk_golden_values():
    t0 = time.perf_counter()
    a = baseline_risk(1.70, 0.08, C0)
    b = baseline_risk(1.34, 0.14, C0)
    c = baseline_risk(1.26, 0.10, C0)
    m = baseline_model()
    m.alpha_r = 1.0
    x = np.zeros(N_FEATURES)

    def with_bias(v):
        m.bias_ = v
        return m

    pi_b = predict(with_bias(0.55), b.z_stat, x)
    pi_c = predict(with_bias(-0.40), c.z_stat, x)
    elapsed = time.perf_counter() - t0
    checks = {
        "A pi_stat at floor": abs(a.pi_stat - 1e-6) <= 1e-3,
        "B pi_stat": abs(b.pi_stat - 0.472) <= 1e-3,
        "B z_stat": abs(b.z_stat - (-0.112)) <= 1e-3,
        "B pi": abs(pi_b - 0.608) <= 1e-3,
        "C pi_stat": abs(c.pi_stat - 0.758) <= 1e-3,
        "C z_stat": abs(c.z_stat - 1.142) <= 1e-3,
        "C pi": abs(pi_c - 0.678) <= 1e-3,
        "runtime": elapsed < 1.0,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"A pi_stat={a.pi_stat:.2e}; B {b.pi_stat:.4f}/{b.z_stat:.5f}/{pi_b:.4f}; "
              f"C {c.pi_stat:.4f}/{c.z_stat:.4f}/{pi_c:.4f}; {elapsed * 1e3:.1f} ms")
    if failed:
        detail += f"; off by more than 1e-3: {', '.join(failed)}"
    assert record(1, "golden risk values", not failed, detail)


# ------------------------------------------------------------------ 2


def test_02_boundary_randomness():
    t0 = time.perf_counter()
    p = SimProcess("normal", (10.0, 1.0), 100, SpecLimits(usl=10.0 + 3 * C0), C0)
    pi = oracle_risk(p, 2000, C0, seed=0)
    elapsed = time.perf_counter() - t0
    centred = SimProcess("normal", (10.0, 1.0), 100, SpecLimits(10.0 - 3 * C0, 10.0 + 3 * C0), C0)
    pi_centred = oracle_risk(centred, 2000, C0, seed=0)
    ok = 0.43 <= pi <= 0.57 and elapsed < 30
    assert record(2, "boundary randomness", ok,
                  f"pi_true={pi:.4f} (one-sided spec) in [0.43, 0.57]; {elapsed:.2f} s "
                  f"[centred two-sided spec gives {pi_centred:.4f}]")


# ------------------------------------------------------------------ 3


def test_03_nested_mc_ordering():
    t0 = time.perf_counter()
    seeds = range(5)
    passes, notes = 0, []
    for s in seeds:
        res = run_nested_mc(SimConfig(seed=s))
        m = res.report["metrics"]
        o = calibration_ordering(m)
        passes += o["all"]
        notes.append(
            f"seed {s}: ECE a/f/h/b={m['uccap_anchored']['ece']:.3f}/{m['uccap_free']['ece']:.3f}/"
            f"{m['hard_label']['ece']:.3f}/{m['baseline']['ece']:.3f} "
            f"ok={','.join(k for k, v in o.items() if v and k != 'all') or '-'}"
        )
    elapsed = time.perf_counter() - t0
    for n in notes:
        print("   ", n)
    ok = passes >= 4 and elapsed / len(seeds) < 600
    assert record(3, "nested MC ordering", ok,
                  f"full ordering held in {passes}/5 seeds (need 4); {elapsed / len(seeds):.1f} s per seed; "
                  + " | ".join(notes))


# ------------------------------------------------------------------ 4


def test_04_estimation_error():
    t0 = time.perf_counter()
    normal = estimation_error_study((20, 50, 100, 200), 200, "normal", C0, seed=0)
    rmse = [normal[n]["normal"] for n in (20, 50, 100, 200)]
    decreasing = all(a > b for a, b in zip(rmse, rmse[1:]))
    checks = [decreasing, normal[20]["percentile_empirical"] > normal[20]["percentile_bestfit"]]
    details = []
    for fam in ("lognormal", "weibull", "logistic"):
        r = estimation_error_study((20,), 200, fam, C0, seed=0)[20]
        checks.append(r["percentile_empirical"] > r["percentile_bestfit"])
        details.append(f"{fam} {r['percentile_empirical']:.3f}>{r['percentile_bestfit']:.3f}")
    elapsed = time.perf_counter() - t0
    ok = all(checks) and elapsed < 120
    assert record(4, "estimation error", ok,
                  f"normal RMSE {' > '.join(f'{v:.3f}' for v in rmse)}; n=20 empirical vs best-fit: normal "
                  f"{normal[20]['percentile_empirical']:.3f}>{normal[20]['percentile_bestfit']:.3f}, "
                  f"{', '.join(details)}; {elapsed:.1f} s")


# ------------------------------------------------------------------ 5


def _rel_fd_error(fun, x, h=1e-6):
    _, g = fun(x)
    num = np.array([(fun(x + h * e)[0] - fun(x - h * e)[0]) / (2 * h) for e in np.eye(x.size)])
    return np.linalg.norm(g - num) / max(np.linalg.norm(num), 1e-12)


def test_05_gradient_suite():
    r = np.random.default_rng(2024)
    n, d = 60, 6
    Xs = r.normal(size=(n, d))
    z = r.normal(0, 2, n)
    y_soft = r.uniform(size=n)
    y_hard = (r.uniform(size=n) < 0.4).astype(float)
    w = r.uniform(0.5, 3, n)
    cpk = r.normal(C0, 0.2, n)
    se = r.uniform(0.05, 0.3, n)
    worst = {}
    for loss, y in (("bce", y_hard), ("soft_ce", y_soft), ("brier", y_soft)):
        for free in (False, True):
            errs = [_rel_fd_error(lambda q: losses.residual_objective(q, Xs, z, y, w, loss, 0.5, 0.3, free),
                                  r.normal(size=d + 1 + free) * 0.5) for _ in range(20)]
            worst[f"{loss}{'/free' if free else ''}"] = max(errs)
    errs = [_rel_fd_error(lambda q: losses.latent_objective(q, Xs, cpk, se, y_hard, w, C0, 0.8, 0.1),
                          r.normal(size=d + 1) * 0.05) for _ in range(20)]
    worst["composite"] = max(errs)
    ok = all(v < 1e-5 for v in worst.values())
    assert record(5, "gradient suite", ok,
                  "max rel err " + ", ".join(f"{k}={v:.1e}" for k, v in worst.items()) + " (< 1e-5)")


# ------------------------------------------------------------------ 6


def test_06_convex_training_determinism():
    r = np.random.default_rng(6)
    n = 500
    z = r.normal(0, 1.5, n)
    F = r.normal(size=(n, N_FEATURES))
    target = 1 / (1 + np.exp(-(z + 0.4 * F[:, 0] - 0.2 * F[:, 3])))
    data = TrainingSet(z[:400], F[:400], target[:400], z[:400] / 5)
    val = TrainingSet(z[400:], F[400:], target[400:], z[400:] / 5)
    runs = []
    for warmup in (0, 200):
        cfg = TrainConfig(loss="soft_ce", anchor_mode="anchored", lambda2=1.0, alpha_r=0.3,
                          warmup_epochs=warmup, seed=0)
        runs.append(train(data, cfg, val=val))
    a, b = runs
    dp = float(np.max(np.abs(np.r_[a.theta_, a.bias_] - np.r_[b.theta_, b.bias_])))
    db = abs(a.selection_["val_brier"] - b.selection_["val_brier"])
    ok = dp <= 1e-4 and db <= 1e-6
    assert record(6, "convex training determinism", ok,
                  f"max |param diff|={dp:.1e} (<= 1e-4), |val Brier diff|={db:.1e} (<= 1e-6)")


# ------------------------------------------------------------------ 7


def test_07_metric_oracles():
    r = np.random.default_rng(7)
    p = r.uniform(size=200)
    t = r.uniform(size=200)
    y = (r.uniform(size=200) < p).astype(int)
    errs = {}
    errs["brier"] = abs(metrics.brier(p, t) - sum((a - b) ** 2 for a, b in zip(p, t)) / 200)
    ll = 0.0
    for a, b in zip(p, t):
        a = min(max(a, 1e-12), 1 - 1e-12)
        ll -= b * math.log(a) + (1 - b) * math.log(1 - a)
    errs["logloss"] = abs(metrics.logloss(p, t) - ll / 200)
    bins = {}
    for a, b in zip(p, t):
        bins.setdefault(min(int(a * 10), 9), []).append((a, b))
    e = sum(len(v) / 200 * abs(sum(a for a, _ in v) / len(v) - sum(b for _, b in v) / len(v)) for v in bins.values())
    errs["ece"] = abs(metrics.ece(p, t) - e)
    pos = [a for a, b in zip(p, y) if b]
    neg = [a for a, b in zip(p, y) if not b]
    auc = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg) / (len(pos) * len(neg))
    errs["roc_auc"] = abs(metrics.roc_auc(p, y) - auc)
    dr = metrics.decision_rates(p, y, 0.5)
    fa = sum(1 for a, b in zip(p, y) if a <= 0.5 and b) / 200
    fr = sum(1 for a, b in zip(p, y) if a > 0.5 and not b) / 200
    acc = sum(1 for a, b in zip(p, y) if (a > 0.5) == bool(b)) / 200
    errs["decision_rates"] = max(abs(dr.false_accept - fa), abs(dr.false_reject - fr), abs(dr.accuracy - acc))
    ok = all(v <= 1e-12 for v in errs.values())
    assert record(7, "metric oracles", ok, ", ".join(f"{k} {v:.1e}" for k, v in errs.items()) + " (<= 1e-12)")


# ------------------------------------------------------------------ 8


def test_08_bootstrap_se():
    se, analytic = [], []
    for rep in range(50):
        values = np.random.default_rng([8, rep]).normal(10.0, 0.02, 32)
        s = DimensionSample("b", values, SpecLimits(9.9, 10.1))
        cpk = estimate_capability(s).cpk_hat
        se.append(bootstrap_se(s, 100, rng_seed=rep))
        analytic.append(math.sqrt(1 / (9 * 32) + cpk**2 / (2 * 31)))
    ratio = np.mean(se) / np.mean(analytic)
    ok = abs(ratio - 1) <= 0.25
    assert record(8, "bootstrap SE sanity", ok,
                  f"mean bootstrap SE {np.mean(se):.4f} vs analytic {np.mean(analytic):.4f} (ratio {ratio:.3f})")


# ------------------------------------------------------------------ 9


def test_09_leakfree_hygiene():
    t0 = time.perf_counter()
    data = synthetic_leakfree_dataset(seed=0)
    res = leakfree_comparison(data, k_splits=10, seed=0, c0=C0)
    elapsed = time.perf_counter() - t0
    ok = res["leaks"] == 0 and abs(res["delta_brier"]) <= 0.03
    assert record(9, "leak-free hygiene", ok,
                  f"{res['leaks']} overlapping dim_ids over 10 splits; Brier UC-Cap "
                  f"{res['uccap_anchored']['mean']:.4f}+-{res['uccap_anchored']['sd']:.4f} vs logistic-z "
                  f"{res['logistic_z']['mean']:.4f}+-{res['logistic_z']['sd']:.4f}, |delta|={abs(res['delta_brier']):.4f}"
                  f" (<= 0.03); {elapsed:.1f} s")


# ------------------------------------------------------------------ 10


def test_10_decision_chain_rows():
    rows = {
        "D018": ((9.77, 9.97), 9.845, 0.0132, 1.883, True, 0.3, 2.3, ("Low", "Acceptable", "Accept")),
        "D010": ((5.42, 5.62), 5.578, 0.0468, 0.302, True, 0.3, 99.9,
                 ("High", "Mixed mechanism", "Reduce sd + re-center")),
        "D002": ((1.07, 1.27), 1.178, 0.0230, 1.389, False, 0.8, 48.5, ("Med", "Skewed", "Review distribution")),
        "D004": ((2.17, 2.37), 2.278, 0.0231, 1.334, True, 0.3, 53.7,
                 ("Med", "Latent model risk", "Investigate latent risk")),
    }
    got = {}
    for dim, (lim, mean, sd, cpk, ok_norm, skew, score, _) in rows.items():
        est = CapabilityEstimate(cpk, "normal", mean, sd, skew, 0.0, 0.3, ok_norm, "normal", 50)
        a = decision_chain(score / 100, est, score / 100, dim_id=dim, spec=SpecLimits(*lim))
        got[dim] = (a.level, a.reason, a.action)
    ok = all(got[d] == rows[d][-1] for d in rows)
    assert record(10, "decision-chain rows", ok, "; ".join(f"{d}={'/'.join(v)}" for d, v in got.items()))


if __name__ == "__main__":
    results = []
    for name, fn in sorted((k, v) for k, v in dict(globals()).items() if k.startswith("test_")):
        try:
            fn()
            results.append(True)
        except AssertionError:
            results.append(False)
    print(f"{sum(results)}/{len(results)} criteria pass")
    sys.exit(0 if all(results) else 1)
