"""Residual-model feature vector and its standardizer.

The schema deliberately holds nothing derived from Cpk-hat, its standard
error or the baseline probability: the residual term must not be able to
re-learn the anchor it is added to.
"""

import math

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .capability import estimate_capability
from .exceptions import EmptyTrainingSet, SchemaMismatch

SCHEMA_VERSION = "uccap-features-v1"

FEATURE_NAMES = (
    "skewness",
    "excess_kurtosis",
    "normality_stat",
    "spec_type",
    "rel_position",
    "spec_width_ratio",
    "tail_margin_lo",
    "has_lsl",
    "tail_margin_hi",
    "has_usl",
    "cv",
    "n_log",
    "path_percentile",
)
N_FEATURES = len(FEATURE_NAMES)

# Feature groups, used for ablations and reporting.
FEATURE_GROUPS = {
    "distributional": ("skewness", "excess_kurtosis", "normality_stat"),
    "specification": ("spec_type", "rel_position", "spec_width_ratio", "tail_margin_lo", "has_lsl", "tail_margin_hi", "has_usl"),
    "uncertainty": ("cv", "n_log", "path_percentile"),
}

SD_GUARD = 1e-12


def _finite(v):
    return float(v) if v is not None and math.isfinite(v) else 0.0


def extract_features(sample, est):
    """Feature vector for one dimension, ordered as :data:`FEATURE_NAMES`."""
    spec = sample.spec
    mu, sd = est.mean, est.sd
    if spec.bilateral:
        mid = 0.5 * (spec.lsl + spec.usl)
        half = 0.5 * (spec.usl - spec.lsl)
        rel_position = (mu - mid) / half
        width_ratio = (spec.usl - spec.lsl) / sd / 6.0
    else:
        rel_position = 0.0
        width_ratio = 0.0
    lo = (mu - spec.lsl) / sd if spec.lsl is not None else 0.0
    hi = (spec.usl - mu) / sd if spec.usl is not None else 0.0
    return np.array(
        [
            _finite(est.skewness),
            _finite(est.excess_kurtosis),
            _finite(est.normality_stat),
            0.0 if spec.bilateral else 1.0,
            rel_position,
            width_ratio,
            lo,
            float(spec.lsl is not None),
            hi,
            float(spec.usl is not None),
            sd / abs(mu) if mu != 0 else 0.0,
            math.log(sample.n),
            float(est.method == "percentile"),
        ]
    )


def check_features(X):
    X = check_array(X, ensure_2d=True, dtype=float)
    if X.shape[1] != N_FEATURES:
        raise SchemaMismatch(f"expected {N_FEATURES} features ({SCHEMA_VERSION}), got {X.shape[1]}")
    return X


class FeatureExtractor(TransformerMixin, BaseEstimator):
    """Stateless transformer from ``DimensionSample`` objects to feature rows.

    Parameters
    ----------
    policy : {"auto", "normal_only", "percentile_only"}
        Estimator policy used for the per-sample capability estimate.
    """

    def __init__(self, policy="auto"):
        self.policy = policy

    def fit(self, samples, y=None):
        self.n_features_out_ = N_FEATURES
        return self

    def transform(self, samples):
        rows = [extract_features(s, estimate_capability(s, self.policy)) for s in samples]
        return np.array(rows).reshape(len(rows), N_FEATURES)

    def get_feature_names_out(self, input_features=None):
        return np.array(FEATURE_NAMES, dtype=object)


class Standardizer(TransformerMixin, BaseEstimator):
    """Per-feature z-scoring fitted on the training split only.

    Scales below ``1e-12`` are replaced by 1 so constant features map to 0.
    Fitted attributes: ``mean_``, ``scale_``.
    """

    def fit(self, X, y=None):
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[0] == 0:
            raise EmptyTrainingSet("cannot fit a standardizer on zero rows")
        sd = X.std(axis=0)
        # exact constant columns keep their value as the centre so they map to 0
        self.mean_ = np.where(np.ptp(X, axis=0) == 0, X[0], X.mean(axis=0))
        self.scale_ = np.where(sd < SD_GUARD, 1.0, sd)
        self.n_features_in_ = X.shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "mean_")
        X = check_array(X, ensure_2d=True, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise SchemaMismatch(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    @classmethod
    def from_params(cls, mean, scale):
        s = cls()
        s.mean_ = np.asarray(mean, dtype=float)
        s.scale_ = np.asarray(scale, dtype=float)
        s.n_features_in_ = s.mean_.size
        return s


def fit_standardizer(train):
    if len(train) == 0:
        raise EmptyTrainingSet("empty training set")
    return Standardizer().fit(np.atleast_2d(np.asarray(train, dtype=float)))


def apply_standardizer(standardizer, x):
    x = np.asarray(x, dtype=float)
    out = standardizer.transform(np.atleast_2d(x))
    return out[0] if x.ndim == 1 else out
