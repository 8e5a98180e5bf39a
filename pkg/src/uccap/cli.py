"""``uccap`` command line: analyze, train, simulate, evaluate, decide.

Every subcommand reads a JSON config (all keys optional), writes its outputs
to ``--out`` and exits 0.  Failures exit with status 2 after printing a JSON
error object to stderr and, when possible, writing ``error.json`` to the
output directory.
"""

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass, field, fields
from typing import Optional

import numpy as np

from . import io
from .analysis import analyze_sample
from .capability import POLICIES
from .decision import DecisionPolicy, bayes_alpha, decision_chain, reason_action
from .exceptions import ParseError, UCCapError
from .metrics import calibration_report, pr_curve
from .model import TrainConfig, load_model, model_to_dict, predict, train
from .simulation import SimConfig, dimension_seed, run_nested_mc, soft_target_rows, calibration_ordering
from .uncertainty import EPSILON_CLIP, baseline_risk, sigmoid

logger = logging.getLogger("uccap")

EXIT_OK = 0
EXIT_ERROR = 2

ANALYSIS_COLUMNS = (
    "dim", "lsl", "usl", "mean", "sd", "cpk", "normality", "best_dist", "score", "level", "reason",
    "action", "pi_stat", "z_stat", "se", "pi", "residual", "method", "accept", "mode",
)
DECISION_COLUMNS = ("dim", "pi", "alpha_decision", "decision", "score", "level", "reason", "action")


@dataclass
class RunConfig:
    c0: float = 1.33
    epsilon_near: float = 0.1
    epsilon_clip: float = EPSILON_CLIP
    n_boot: int = 100
    alpha_decision: float = 0.5
    c_fa: Optional[float] = None
    c_fr: Optional[float] = None
    estimator_policy: str = "auto"
    seed: int = 0
    train: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)

    @classmethod
    def from_dict(cls, d):
        if not isinstance(d, dict):
            raise ParseError("config must be a JSON object")
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            logger.warning("ignoring unknown config keys: %s", ", ".join(unknown))
        cfg = cls(**{k: v for k, v in d.items() if k in known})
        if cfg.estimator_policy not in POLICIES:
            raise ParseError(f"estimator_policy must be one of {POLICIES}")
        return cfg

    @property
    def alpha(self):
        if self.c_fa is not None or self.c_fr is not None:
            return bayes_alpha(self.c_fa or 0.0, self.c_fr or 0.0)
        return self.alpha_decision

    def train_config(self):
        known = {f.name for f in fields(TrainConfig)}
        kw = {k: v for k, v in self.train.items() if k in known}
        kw.update(c0=self.c0, epsilon_near=self.epsilon_near, seed=self.seed)
        return TrainConfig(**kw)

    def sim_config(self):
        d = {"c0": self.c0, "epsilon_near": self.epsilon_near, "n_boot": self.n_boot,
             "policy": self.estimator_policy, **self.simulation, "seed": self.seed}
        return SimConfig.from_dict(d)


def load_config(path, seed_arg=None):
    """Config from ``path``; ``UCCAP_SEED`` overrides its seed and ``--seed``
    overrides both."""
    cfg = RunConfig.from_dict(io.read_json(path)) if path else RunConfig()
    env = os.environ.get("UCCAP_SEED")
    if env not in (None, ""):
        try:
            cfg.seed = int(env)
        except ValueError:
            raise ParseError(f"UCCAP_SEED must be an integer, got {env!r}") from None
    if seed_arg is not None:
        cfg.seed = seed_arg
    return cfg


def _require(value, flag):
    if value is None:
        raise ParseError(f"{flag} is required for this command")
    return value


# ----------------------------------------------------------------- analyze


def _analysis_rows_from_measurements(samples, cfg, model):
    rows = []
    policy = DecisionPolicy(alpha_decision=cfg.alpha)
    for s in sorted(samples, key=lambda s: s.dim_id):
        rng = np.random.default_rng(dimension_seed(cfg.seed, s.dim_id))
        a = analyze_sample(s, cfg.c0, cfg.n_boot, cfg.estimator_policy, rng, cfg.epsilon_clip)
        if model is None:
            pi, residual = a.pi_stat, 0.0
        else:
            pi = predict(model, a.z_stat, a.features)
            residual = float(model.residual(np.r_[a.z_stat, a.features][None, :])[0])
        ra = decision_chain(pi, a.estimate, a.pi_stat, policy, s.dim_id, a.z_stat, residual, s.spec)
        est = a.estimate
        rows.append({
            "dim": s.dim_id, "lsl": s.spec.lsl, "usl": s.spec.usl, "mean": est.mean, "sd": est.sd,
            "cpk": est.cpk_hat, "normality": "Pass" if est.normality_pass else "Fail",
            "best_dist": est.best_fit or "", "score": ra.score, "level": ra.level, "reason": ra.reason,
            "action": ra.action, "pi_stat": a.pi_stat, "z_stat": a.z_stat, "se": a.se, "pi": pi,
            "residual": residual, "method": est.method, "accept": ra.accept,
            "mode": "baseline-only" if model is None else "model",
        })
    return rows


def _assess_precomputed(rec, cfg, policy):
    """Decision chain for one precomputed input row."""
    if rec.get("cpk_hat") is not None and rec.get("se") is not None:
        b = baseline_risk(rec["cpk_hat"], rec["se"], cfg.c0, cfg.epsilon_clip)
        residual = rec.get("residual") or 0.0
        pi = float(np.clip(sigmoid(b.z_stat + residual), 1e-12, 1 - 1e-12)) if rec.get("pi") is None else rec["pi"]
        pi_stat, z_stat, cpk = b.pi_stat, b.z_stat, rec["cpk_hat"]
    else:
        pi, residual, cpk = rec["pi"], rec.get("residual") or 0.0, rec.get("cpk_hat")
        pi_stat, z_stat = float("nan"), float("nan")
    level = policy.level(pi)
    passed = rec.get("normality_pass", True)
    reason, action = reason_action(level, cpk if cpk is not None else float("inf"),
                                   rec.get("rel_position") or 0.0, passed, rec.get("skewness") or 0.0, policy)
    return {
        "dim": rec["dim_id"], "cpk": cpk, "se": rec.get("se"), "pi_stat": pi_stat, "z_stat": z_stat,
        "residual": residual, "pi": pi, "score": 100.0 * pi, "level": level, "reason": reason,
        "action": action, "accept": pi <= policy.alpha_decision, "alpha_decision": policy.alpha_decision,
        "decision": "accept" if pi <= policy.alpha_decision else "reject",
        "normality": "" if "normality_pass" not in rec else ("Pass" if passed else "Fail"),
        "mode": "precomputed",
    }


def cmd_analyze(cfg, data, model_path, out):
    model = load_model(model_path) if model_path else None
    header, _ = io.read_rows(data)
    if io.is_measurement_file(header):
        rows = _analysis_rows_from_measurements(io.ingest_csv(data), cfg, model)
    else:
        policy = DecisionPolicy(alpha_decision=cfg.alpha)
        recs = sorted(io.read_assessment_inputs(data), key=lambda r: r["dim_id"])
        rows = [_assess_precomputed(r, cfg, policy) for r in recs]
    io.write_csv(os.path.join(out, "analysis.csv"), rows, ANALYSIS_COLUMNS)
    return {"rows": len(rows), "mode": "baseline-only" if model is None else "model"}


# ------------------------------------------------------------ train/evaluate


def _rows_for(cfg, data):
    samples = sorted(io.ingest_csv(data), key=lambda s: s.dim_id)
    return soft_target_rows(samples, cfg.c0, cfg.n_boot, cfg.estimator_policy, cfg.seed)


def _report(model, rows, idx, cfg):
    sub = rows.rows.subset(idx)
    pred = model.predict_proba(sub.design())[:, 1]
    return calibration_report(pred, sub.target, y_hard=rows.y_hard[idx], near=sub.near(cfg.epsilon_near),
                              alpha_decision=cfg.alpha).to_dict()


def cmd_train(cfg, data, out):
    tcfg = cfg.train_config()
    rows = _rows_for(cfg, data)
    model = train(rows.rows, tcfg)
    groups = rows.rows.groups
    val_idx = np.flatnonzero(np.isin(groups, model.val_groups_))
    train_idx = np.flatnonzero(np.isin(groups, model.train_groups_))
    doc = model_to_dict(model)
    doc["train_dim_ids"] = [str(g) for g in model.train_groups_]
    doc["val_dim_ids"] = [str(g) for g in model.val_groups_]
    io.write_json(os.path.join(out, "model.json"), doc)
    log = {
        "config": asdict(tcfg),
        "selection": model.selection_,
        "train_metrics": _report(model, rows, train_idx, cfg),
        "val_metrics": _report(model, rows, val_idx, cfg),
        "loss_curve_tail": list(model.loss_curve_[-5:]),
        "n_iter": model.n_iter_,
        "converged": model.converged_,
    }
    io.write_json(os.path.join(out, "training_log.json"), log)
    return {"alpha_r": model.alpha_r, "lambda2": model.lambda2, "val_brier": log["val_metrics"]["brier"]}


def cmd_evaluate(cfg, data, model_path, out):
    model = load_model(_require(model_path, "--model"))
    with open(model_path, encoding="utf-8") as fh:
        doc = json.load(fh)
    rows = _rows_for(cfg, data)
    groups = rows.rows.groups
    report = {"all": _report(model, rows, np.arange(len(groups)), cfg)}
    for split in ("train", "val"):
        ids = doc.get(f"{split}_dim_ids")
        if ids:
            idx = np.flatnonzero(np.isin(groups, ids))
            if idx.size:
                report[split] = _report(model, rows, idx, cfg)
    io.write_json(os.path.join(out, "evaluation.json"), report)
    bins = report["all"]["reliability_bins"]
    io.write_csv(os.path.join(out, "reliability.csv"), bins, ("bin_lo", "bin_hi", "mean_pred", "mean_target", "count"))
    pred = model.predict_proba(rows.rows.design())[:, 1]
    if rows.y_hard.size and 0 < rows.y_hard.sum() < rows.y_hard.size:
        thr, prec, rec = pr_curve(pred, rows.y_hard)
        pts = [{"threshold": t, "precision": p, "recall": r} for t, p, r in zip(thr, prec, rec)]
    else:
        pts = []
    io.write_csv(os.path.join(out, "pr_curve.csv"), pts, ("threshold", "precision", "recall"))
    return {"brier": report["all"]["brier"], "n": report["all"]["n"]}


# ---------------------------------------------------------------- simulate


def cmd_simulate(cfg, out):
    scfg = cfg.sim_config()
    t0 = time.perf_counter()
    res = run_nested_mc(scfg)
    elapsed = time.perf_counter() - t0
    table = res.table()
    cols = list(table[0]) if table else ["index"]
    io.write_csv(os.path.join(out, "oracle.csv"), table, cols)
    report = dict(res.report)
    report["config"] = asdict(scfg)
    report["ordering"] = calibration_ordering(report["metrics"])
    io.write_json(os.path.join(out, "metrics.json"), report)
    return {"processes": len(table), "elapsed_seconds": round(elapsed, 3)}


# ------------------------------------------------------------------ decide


def cmd_decide(cfg, data, out):
    policy = DecisionPolicy(alpha_decision=cfg.alpha)
    recs = sorted(io.read_assessment_inputs(data), key=lambda r: r["dim_id"])
    rows = [_assess_precomputed(r, cfg, policy) for r in recs]
    io.write_csv(os.path.join(out, "decisions.csv"), rows, DECISION_COLUMNS)
    return {"rows": len(rows), "alpha_decision": policy.alpha_decision}


# -------------------------------------------------------------------- main


def build_parser():
    p = argparse.ArgumentParser(prog="uccap", description="Uncertainty-calibrated capability decisions.")
    p.add_argument("command", choices=("analyze", "train", "simulate", "evaluate", "decide"))
    p.add_argument("--config", help="JSON run configuration")
    p.add_argument("--data", help="input CSV")
    p.add_argument("--model", help="model JSON (analyze, evaluate)")
    p.add_argument("--out", default=".", help="output directory (default: current)")
    p.add_argument("--seed", type=int, help="overrides the config seed and UCCAP_SEED")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def _error_payload(exc):
    if isinstance(exc, UCCapError):
        return exc.to_dict()
    if isinstance(exc, FileNotFoundError):
        return {"error": "file_not_found", "type": type(exc).__name__, "message": str(exc)}
    return {"error": "error", "type": type(exc).__name__, "message": str(exc)}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = args.out
    try:
        os.makedirs(out, exist_ok=True)
        cfg = load_config(args.config, args.seed)
        if args.command == "analyze":
            summary = cmd_analyze(cfg, _require(args.data, "--data"), args.model, out)
        elif args.command == "train":
            summary = cmd_train(cfg, _require(args.data, "--data"), out)
        elif args.command == "simulate":
            summary = cmd_simulate(cfg, out)
        elif args.command == "evaluate":
            summary = cmd_evaluate(cfg, _require(args.data, "--data"), args.model, out)
        else:
            summary = cmd_decide(cfg, _require(args.data, "--data"), out)
    except (UCCapError, OSError, ValueError, KeyError) as exc:
        payload = {"status": "error", "command": args.command, **_error_payload(exc)}
        print(json.dumps(payload), file=sys.stderr)
        try:
            io.write_json(os.path.join(out, "error.json"), payload)
        except OSError:
            pass
        return EXIT_ERROR
    stale = os.path.join(out, "error.json")
    if os.path.exists(stale):
        os.remove(stale)
    print(json.dumps({"status": "ok", "command": args.command, **io._jsonable(summary)}))
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
