"""Uncertainty-calibrated capability decisions.

Finite-sample Cpk estimates are turned into failure-risk probabilities by a
statistical baseline ``Phi((c0 - Cpk_hat) / SE)`` plus a small learned
residual in log-odds space.
"""

from .analysis import DimensionAnalysis, analyze_sample
from .capability import (
    CapabilityEstimate,
    DimensionSample,
    SpecLimits,
    estimate_capability,
    estimate_cpk_normal,
    estimate_cpk_percentile,
    fit_distribution,
    normality_test,
)
from .decision import DecisionPolicy, RiskAssessment, bayes_alpha, decide, decision_chain
from .exceptions import UCCapError
from .features import FEATURE_NAMES, FeatureExtractor, Standardizer, extract_features
from .metrics import brier, calibration_report, ece, logloss, pr_auc, roc_auc
from .model import LatentCapabilityModel, TrainConfig, TrainingSet, UCCapModel, load_model, predict, save_model, train
from .uncertainty import BaselineRisk, baseline_risk, bootstrap_se

__version__ = "0.1.0"

__all__ = [
    "BaselineRisk",
    "CapabilityEstimate",
    "DecisionPolicy",
    "DimensionAnalysis",
    "DimensionSample",
    "FEATURE_NAMES",
    "FeatureExtractor",
    "LatentCapabilityModel",
    "RiskAssessment",
    "SpecLimits",
    "Standardizer",
    "TrainConfig",
    "TrainingSet",
    "UCCapError",
    "UCCapModel",
    "analyze_sample",
    "baseline_risk",
    "bayes_alpha",
    "bootstrap_se",
    "brier",
    "calibration_report",
    "decide",
    "decision_chain",
    "ece",
    "estimate_capability",
    "estimate_cpk_normal",
    "estimate_cpk_percentile",
    "extract_features",
    "fit_distribution",
    "load_model",
    "logloss",
    "normality_test",
    "pr_auc",
    "predict",
    "roc_auc",
    "save_model",
    "train",
]
