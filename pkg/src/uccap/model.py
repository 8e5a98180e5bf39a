"""UC-Cap residual model: anchored additive log-odds on top of the baseline.

``pi = sigmoid(anchor * z_stat + alpha_r * (theta . x_std + bias))``

The estimators follow the scikit-learn contract.  Their input matrix carries
the anchor in column 0 and the raw (unstandardized) feature vector after it::

    X = np.column_stack([z_stat, features])

so they can be dropped into ``Pipeline``/``clone``/``cross_val_predict``.
"""

import json
import logging
import math
from dataclasses import dataclass
from itertools import product
from typing import Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_array, check_is_fitted

from . import losses
from .exceptions import (
    CorruptFile,
    EmptyTrainingSet,
    EmptyValidation,
    LengthMismatch,
    NonfiniteLoss,
    NonpositiveSE,
    SchemaMismatch,
    SchemaVersionMismatch,
)
from .features import FEATURE_NAMES, N_FEATURES, SCHEMA_VERSION, Standardizer
from .uncertainty import norm_cdf

logger = logging.getLogger(__name__)

ALPHA_R_GRID = (0.05, 0.1, 0.2, 0.3, 0.5)
LAMBDA2_GRID = (0.01, 0.1, 1.0, 10.0)
PROB_CLIP = 1e-12
ANCHOR_MODES = ("anchored", "free")
LOSSES = ("bce", "soft_ce", "brier", "composite")

# Upper bounds on the second derivative of each per-item loss w.r.t. the logit
_CURVATURE = {"bce": 0.25, "soft_ce": 0.25, "brier": 0.32}


def _lambda_max(D, w):
    M = (D * w[:, None]).T @ D
    return float(np.linalg.eigvalsh(M)[-1])


def gradient_descent(fun, x0, lipschitz, learning_rate=1.0, max_epochs=20000, tol=1e-10,
                     warmup_epochs=0, accelerate=True):
    """Full-batch gradient descent with step ``learning_rate / lipschitz``.

    ``accelerate`` adds Nesterov momentum with gradient-based restarts; without
    it every step is a plain descent step, which cannot increase a convex
    objective for ``learning_rate <= 1``.

    Returns ``(x, curve, converged)`` where ``curve`` holds the objective after
    every epoch.
    """
    x = np.array(x0, dtype=float)
    y = x.copy()
    t = 1.0
    curve = []
    converged = False
    base = learning_rate / lipschitz
    for epoch in range(max_epochs):
        step = base * min(1.0, (epoch + 1) / warmup_epochs) if warmup_epochs else base
        f_y, g_y = fun(y)
        if not np.isfinite(f_y) or not np.all(np.isfinite(g_y)):
            raise NonfiniteLoss(f"objective became non-finite at epoch {epoch}")
        if np.max(np.abs(g_y)) < tol:
            x = y
            converged = True
            curve.append(f_y)
            break
        x_new = y - step * g_y
        if accelerate:
            if g_y @ (x_new - x) > 0:  # momentum points uphill: restart
                t = 1.0
                y = x_new
            else:
                t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
                y = x_new + ((t - 1.0) / t_new) * (x_new - x)
                t = t_new
        else:
            y = x_new
        x = x_new
        curve.append(f_y)
    f_x, _ = fun(x)
    if not np.isfinite(f_x):
        raise NonfiniteLoss("objective became non-finite")
    return x, curve, converged


def _split_anchor(X):
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] < 2:
        raise SchemaMismatch("X needs the anchor column followed by the feature columns")
    return X[:, 0], X[:, 1:]


class UCCapModel(ClassifierMixin, BaseEstimator):
    """Statistically anchored residual classifier.

    Parameters
    ----------
    anchor_mode : {"anchored", "free"}
        ``anchored`` fixes the coefficient on ``z_stat`` at exactly 1;
        ``free`` learns it, starting from 1.
    alpha_r : float
        Residual scale multiplying the whole residual term.
    lambda2 : float
        L2 penalty on the residual coefficients (bias and anchor excluded).
    loss : {"soft_ce", "bce", "brier"}
    learning_rate : float
        Step as a fraction of ``1 / L`` where ``L`` bounds the gradient's
        Lipschitz constant.
    max_epochs, tol, warmup_epochs, accelerate
        Optimizer controls, see :func:`gradient_descent`.
    init : array-like, optional
        Starting ``[theta..., bias(, anchor)]``; zeros (anchor 1) by default.
    c0 : float
        Capability threshold, kept for persistence and reporting.
    alpha_decision : float
        Accept threshold used by :meth:`predict`.
    """

    def __init__(self, anchor_mode="anchored", alpha_r=0.2, lambda2=1.0, loss="soft_ce",
                 learning_rate=1.0, max_epochs=20000, tol=1e-10, warmup_epochs=0,
                 accelerate=True, init=None, c0=1.33, alpha_decision=0.5):
        self.anchor_mode = anchor_mode
        self.alpha_r = alpha_r
        self.lambda2 = lambda2
        self.loss = loss
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.tol = tol
        self.warmup_epochs = warmup_epochs
        self.accelerate = accelerate
        self.init = init
        self.c0 = c0
        self.alpha_decision = alpha_decision

    def fit(self, X, y, sample_weight=None):
        if self.anchor_mode not in ANCHOR_MODES:
            raise ValueError(f"anchor_mode must be one of {ANCHOR_MODES}")
        if self.loss not in _CURVATURE:
            raise ValueError(f"loss must be one of {tuple(_CURVATURE)}")
        z, F = _split_anchor(X)
        y = np.asarray(y, dtype=float)
        if y.shape != z.shape:
            raise LengthMismatch(f"X has {z.size} rows, y has {y.size}")
        if z.size == 0:
            raise EmptyTrainingSet("no training rows")
        w = np.ones_like(z) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        if w.shape != z.shape:
            raise LengthMismatch("sample_weight length mismatch")

        self.standardizer_ = Standardizer().fit(F)
        Xs = self.standardizer_.transform(F)
        free = self.anchor_mode == "free"
        d = Xs.shape[1]
        W = float(w.sum())

        cols = [self.alpha_r * Xs, np.full((z.size, 1), self.alpha_r)]
        if free:
            cols.append(z[:, None])
        lip = _CURVATURE[self.loss] * _lambda_max(np.hstack(cols), w) / W + 2.0 * self.lambda2 / W

        def fun(p):
            val, grad = losses.residual_objective(p, Xs, z, y, w, self.loss, self.lambda2, self.alpha_r, free)
            return val / W, grad / W

        if self.init is None:
            x0 = np.zeros(d + 1 + free)
            if free:
                x0[-1] = 1.0
        else:
            x0 = np.asarray(self.init, dtype=float)
            if x0.size != d + 1 + free:
                raise SchemaMismatch(f"init must have {d + 1 + free} entries")
        params, curve, converged = gradient_descent(
            fun, x0, lip, self.learning_rate, self.max_epochs, self.tol, self.warmup_epochs, self.accelerate
        )
        if not converged:
            logger.debug("training stopped at max_epochs=%d before reaching tol", self.max_epochs)
        self.theta_ = params[:d]
        self.bias_ = float(params[d])
        self.anchor_coef_ = float(params[d + 1]) if free else 1.0
        self.loss_curve_ = np.asarray(curve)
        self.n_iter_ = len(curve)
        self.converged_ = converged
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1] if hasattr(X, "shape") else d + 1
        return self

    def residual(self, X):
        """Residual log-odds ``alpha_r * (theta . x_std + bias)``."""
        check_is_fitted(self, "theta_")
        _, F = _split_anchor(X)
        if F.shape[1] != self.theta_.size:
            raise SchemaMismatch(f"expected {self.theta_.size} features, got {F.shape[1]}")
        return self.alpha_r * (self.standardizer_.transform(F) @ self.theta_ + self.bias_)

    def decision_function(self, X):
        z, _ = _split_anchor(X)
        return self.anchor_coef_ * z + self.residual(X)

    def predict_proba(self, X):
        p = np.clip(1.0 / (1.0 + np.exp(-self.decision_function(X))), PROB_CLIP, 1.0 - PROB_CLIP)
        return np.column_stack([1.0 - p, p])

    def predict(self, X):
        """1 = reject (predicted failure), 0 = accept (pi <= alpha_decision)."""
        return (self.predict_proba(X)[:, 1] > self.alpha_decision).astype(int)

    def score(self, X, y, sample_weight=None):
        """Negative Brier score (higher is better)."""
        p = self.predict_proba(X)[:, 1]
        w = np.ones_like(p) if sample_weight is None else np.asarray(sample_weight, float)
        return -float((w * (p - np.asarray(y, float)) ** 2).sum() / w.sum())


def baseline_model(c0=1.33, n_features=N_FEATURES):
    """A fitted model with theta = 0 and bias = 0: it returns sigmoid(z_stat)."""
    m = UCCapModel(c0=c0)
    m.standardizer_ = Standardizer.from_params(np.zeros(n_features), np.ones(n_features))
    m.theta_ = np.zeros(n_features)
    m.bias_ = 0.0
    m.anchor_coef_ = 1.0
    m.classes_ = np.array([0, 1])
    m.n_features_in_ = n_features + 1
    m.loss_curve_ = np.array([])
    return m


def predict(model, z_stat, x):
    """Failure probability for one dimension (or vectors of them)."""
    z = np.atleast_1d(np.asarray(z_stat, dtype=float))
    x = np.atleast_2d(np.asarray(x, dtype=float))
    p = model.predict_proba(np.column_stack([z, x]))[:, 1]
    return float(p[0]) if np.ndim(z_stat) == 0 else p


class LatentCapabilityModel(BaseEstimator):
    """Latent-capability variant: learns a capability offset head.

    ``C_learned = cpk_hat + g(x_std)`` with a linear ``g`` and
    ``pi = Phi((c0 - C_learned) / se)``; trained with the composite loss.
    Input columns are ``[cpk_hat, se, features...]``.
    """

    def __init__(self, c0=1.33, lambda_cap=1.0, lambda2=0.0, learning_rate=1.0,
                 max_epochs=20000, tol=1e-10, accelerate=True):
        self.c0 = c0
        self.lambda_cap = lambda_cap
        self.lambda2 = lambda2
        self.learning_rate = learning_rate
        self.max_epochs = max_epochs
        self.tol = tol
        self.accelerate = accelerate

    @staticmethod
    def _split(X):
        X = check_array(X, ensure_2d=True, dtype=float)
        cpk, se, F = X[:, 0], X[:, 1], X[:, 2:]
        if np.any(~(se > 0)):
            raise NonpositiveSE("standard errors must be positive")
        return cpk, se, F

    def fit(self, X, y, sample_weight=None):
        cpk, se, F = self._split(X)
        y = np.asarray(y, dtype=float)
        if y.shape != cpk.shape:
            raise LengthMismatch("X and y lengths differ")
        w = np.ones_like(cpk) if sample_weight is None else np.asarray(sample_weight, dtype=float)
        self.standardizer_ = Standardizer().fit(F)
        Xs = self.standardizer_.transform(F)
        W = float(w.sum())
        D = np.column_stack([Xs, np.ones(len(Xs))])
        lip = _lambda_max(D, w / se**2 + 2.0 * self.lambda_cap) / W + 2.0 * self.lambda2 / W

        def fun(p):
            val, grad = losses.latent_objective(p, Xs, cpk, se, y, w, self.c0, self.lambda_cap, self.lambda2)
            return val / W, grad / W

        params, curve, self.converged_ = gradient_descent(
            fun, np.zeros(Xs.shape[1] + 1), lip, self.learning_rate, self.max_epochs, self.tol, 0, self.accelerate
        )
        self.phi_ = params[:-1]
        self.offset_ = float(params[-1])
        self.loss_curve_ = np.asarray(curve)
        return self

    def predict_latent(self, X):
        check_is_fitted(self, "phi_")
        cpk, se, F = self._split(X)
        c = cpk + self.standardizer_.transform(F) @ self.phi_ + self.offset_
        return c, norm_cdf((self.c0 - c) / se)

    def predict_proba(self, X):
        _, p = self.predict_latent(X)
        return np.column_stack([1.0 - p, p])


def predict_latent(head_offset, cpk_hat, se, c0):
    """``(C_learned, pi)`` for an already evaluated head output ``g(x)``."""
    if not se > 0:
        raise NonpositiveSE(f"se must be positive, got {se}")
    c = cpk_hat + head_offset
    return float(c), float(norm_cdf((c0 - c) / se))


# -------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    loss: str = "soft_ce"
    anchor_mode: str = "anchored"
    lambda2: Optional[float] = None  # None -> grid search over LAMBDA2_GRID
    alpha_r: Optional[float] = None  # None -> grid search over ALPHA_R_GRID
    lambda_cap: float = 1.0
    epochs: int = 20000
    learning_rate: float = 1.0
    warmup_epochs: int = 0
    accelerate: bool = True
    tol: float = 1e-10
    weight_near: float = 3.0
    weight_pos_mult: float = 2.0
    weight_cap: float = 10.0
    epsilon_near: float = 0.1
    c0: float = 1.33
    val_fraction: float = 0.2
    seed: int = 0


@dataclass
class TrainingSet:
    """Rows for training: anchor, raw features, target and bookkeeping.

    ``margin`` is ``cpk_hat - c0`` of the row's inputs; it drives the
    near-threshold weighting and the near-threshold validation subset.
    """

    z: np.ndarray
    X: np.ndarray
    target: np.ndarray
    margin: np.ndarray
    groups: Optional[np.ndarray] = None
    cpk_hat: Optional[np.ndarray] = None
    se: Optional[np.ndarray] = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float)
        self.X = np.atleast_2d(np.asarray(self.X, dtype=float))
        self.target = np.asarray(self.target, dtype=float)
        self.margin = np.asarray(self.margin, dtype=float)
        n = self.z.size
        if self.X.shape[0] != n or self.target.size != n or self.margin.size != n:
            raise LengthMismatch("training-set columns have different lengths")
        if self.groups is None:
            self.groups = np.arange(n).astype(str)
        self.groups = np.asarray(self.groups)

    def __len__(self):
        return self.z.size

    def subset(self, idx):
        idx = np.asarray(idx)
        pick = lambda a: None if a is None else np.asarray(a)[idx]  # noqa: E731
        return TrainingSet(self.z[idx], self.X[idx], self.target[idx], self.margin[idx],
                           self.groups[idx], pick(self.cpk_hat), pick(self.se))

    def design(self):
        return np.column_stack([self.z, self.X])

    def near(self, epsilon):
        return np.abs(self.margin) <= epsilon + 1e-12


def risk_weights(margin, positive, weight_near=3.0, weight_pos_mult=2.0, weight_cap=10.0, epsilon_near=0.1):
    """Near-threshold rows get ``weight_near``; near positives a further
    ``weight_pos_mult``; everything is capped at ``weight_cap``."""
    near = np.abs(np.asarray(margin, dtype=float)) <= epsilon_near + 1e-12
    w = np.where(near, weight_near, 1.0)
    w = np.where(near & np.asarray(positive, bool), w * weight_pos_mult, w)
    return np.minimum(w, weight_cap)


def _selection_key(p, data, epsilon):
    y = data.target
    near = data.near(epsilon)
    brier = float(np.mean((p - y) ** 2))
    pc = np.clip(p, PROB_CLIP, 1 - PROB_CLIP)
    logloss = float(-np.mean(y * np.log(pc) + (1 - y) * np.log1p(-pc)))
    near_brier = float(np.mean((p[near] - y[near]) ** 2)) if near.any() else brier
    return (near_brier, logloss, brier)


def _make_model(cfg, alpha_r, lambda2):
    if cfg.loss == "composite":
        return LatentCapabilityModel(c0=cfg.c0, lambda_cap=cfg.lambda_cap, lambda2=lambda2,
                                     learning_rate=cfg.learning_rate, max_epochs=cfg.epochs,
                                     tol=cfg.tol, accelerate=cfg.accelerate)
    return UCCapModel(anchor_mode=cfg.anchor_mode, alpha_r=alpha_r, lambda2=lambda2, loss=cfg.loss,
                      learning_rate=cfg.learning_rate, max_epochs=cfg.epochs, tol=cfg.tol,
                      warmup_epochs=cfg.warmup_epochs, accelerate=cfg.accelerate, c0=cfg.c0)


def _design_for(cfg, data):
    if cfg.loss == "composite":
        if data.cpk_hat is None or data.se is None:
            raise ValueError("composite loss needs cpk_hat and se columns")
        return np.column_stack([data.cpk_hat, data.se, data.X])
    return data.design()


def train(dataset, config=None, val=None):
    """Train a model with validation-based selection of alpha_r and lambda2.

    Parameters
    ----------
    dataset : TrainingSet
        Training rows. When ``val`` is None a group-aware validation split of
        ``config.val_fraction`` is carved out of it.
    config : TrainConfig
    val : TrainingSet, optional

    Returns
    -------
    model
        The selected estimator, fitted on the training rows only. Its
        ``selection_`` attribute records the grid and validation scores.
    """
    cfg = config or TrainConfig()
    if len(dataset) == 0:
        raise EmptyTrainingSet("no training rows")
    if val is None:
        from .simulation import leakfree_splits

        tr_idx, va_idx, _ = leakfree_splits(dataset.groups, k_splits=1,
                                            ratios=(1 - cfg.val_fraction, cfg.val_fraction, 0.0),
                                            seed=cfg.seed)[0]
        train_set, val = dataset.subset(tr_idx), dataset.subset(va_idx)
    else:
        train_set = dataset
    if len(val) == 0:
        raise EmptyValidation("validation split is empty")

    positive = train_set.target >= 0.5
    w = risk_weights(train_set.margin, positive, cfg.weight_near, cfg.weight_pos_mult,
                     cfg.weight_cap, cfg.epsilon_near)
    alphas = (1.0,) if cfg.loss == "composite" else (
        ALPHA_R_GRID if cfg.alpha_r is None else (cfg.alpha_r,))
    lambdas = LAMBDA2_GRID if cfg.lambda2 is None else (cfg.lambda2,)

    X_tr, X_va = _design_for(cfg, train_set), _design_for(cfg, val)
    best, best_key, grid = None, None, []
    for a, lam in product(alphas, lambdas):
        model = _make_model(cfg, a, lam).fit(X_tr, train_set.target, sample_weight=w)
        key = _selection_key(model.predict_proba(X_va)[:, 1], val, cfg.epsilon_near)
        grid.append({"alpha_r": a, "lambda2": lam, "near_brier": key[0], "logloss": key[1], "brier": key[2]})
        if best_key is None or key < best_key:
            best, best_key = model, key
    best.selection_ = {
        "grid": grid,
        "val_near_brier": best_key[0],
        "val_logloss": best_key[1],
        "val_brier": best_key[2],
        "n_train": len(train_set),
        "n_val": len(val),
    }
    best.train_groups_ = np.unique(train_set.groups)
    best.val_groups_ = np.unique(val.groups)
    return best


# ----------------------------------------------------------------- persistence


def model_to_dict(model):
    check_is_fitted(model, "theta_")
    return {
        "schema_version": SCHEMA_VERSION,
        "feature_names": list(FEATURE_NAMES),
        "anchor_mode": model.anchor_mode,
        "anchor_coef": float(model.anchor_coef_),
        "alpha_r": float(model.alpha_r),
        "lambda2": float(model.lambda2),
        "loss": model.loss,
        "theta": [float(v) for v in model.theta_],
        "bias": float(model.bias_),
        "standardizer": {
            "mean": [float(v) for v in model.standardizer_.mean_],
            "sd": [float(v) for v in model.standardizer_.scale_],
        },
        "c0": float(model.c0),
    }


def model_from_dict(doc):
    try:
        version = doc["schema_version"]
    except (KeyError, TypeError):
        raise CorruptFile("model document has no schema_version") from None
    if version != SCHEMA_VERSION:
        raise SchemaVersionMismatch(f"model schema {version!r}, expected {SCHEMA_VERSION!r}")
    try:
        m = UCCapModel(anchor_mode=doc["anchor_mode"], alpha_r=float(doc["alpha_r"]),
                       lambda2=float(doc["lambda2"]), loss=doc.get("loss", "soft_ce"), c0=float(doc["c0"]))
        theta = np.asarray(doc["theta"], dtype=float)
        mean = np.asarray(doc["standardizer"]["mean"], dtype=float)
        sd = np.asarray(doc["standardizer"]["sd"], dtype=float)
        anchor = float(doc["anchor_coef"])
        bias = float(doc["bias"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptFile(f"malformed model document: {exc}") from None
    if not (theta.size == mean.size == sd.size):
        raise CorruptFile("theta and standardizer lengths differ")
    if m.anchor_mode == "anchored" and anchor != 1.0:
        raise CorruptFile("anchored model must have anchor_coef == 1")
    m.theta_ = theta
    m.bias_ = bias
    m.anchor_coef_ = anchor
    m.standardizer_ = Standardizer.from_params(mean, sd)
    m.classes_ = np.array([0, 1])
    m.n_features_in_ = theta.size + 1
    m.loss_curve_ = np.array([])
    return m


def save_model(model, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, indent=2)
        fh.write("\n")


def load_model(path):
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise CorruptFile(f"{path}: {exc}") from None
    return model_from_dict(doc)
