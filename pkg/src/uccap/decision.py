"""Bayes-threshold decisions and the score -> level -> reason -> action chain."""

import math
from dataclasses import dataclass

from .exceptions import NonpositiveCost

LEVELS = ("Low", "Med", "High")

ACCEPTABLE = "Acceptable"
SKEWED = "Skewed"
LATENT_MODEL_RISK = "Latent model risk"
MIXED_MECHANISM = "Mixed mechanism"

ACCEPT = "Accept"
REVIEW_DISTRIBUTION = "Review distribution"
INVESTIGATE_LATENT_RISK = "Investigate latent risk"
REDUCE_SD_RECENTER = "Reduce sd + re-center"


def bayes_alpha(c_fa, c_fr):
    """Cost-optimal accept threshold ``c_fr / (c_fa + c_fr)``."""
    if not (c_fa > 0 and c_fr > 0):
        raise NonpositiveCost(f"costs must be positive, got c_fa={c_fa}, c_fr={c_fr}")
    return c_fr / (c_fa + c_fr)


def decide(pi, alpha_decision):
    """Accept iff ``pi <= alpha_decision``."""
    return bool(pi <= alpha_decision)


@dataclass(frozen=True)
class DecisionPolicy:
    alpha_decision: float = 0.5
    low_hi: float = 0.10
    high_lo: float = 0.90
    cpk_floor: float = 1.0
    position_limit: float = 0.5
    skew_limit: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.alpha_decision < 1.0:
            raise ValueError("alpha_decision must lie in (0, 1)")
        if not 0.0 < self.low_hi < self.high_lo < 1.0:
            raise ValueError("level bounds must satisfy 0 < low_hi < high_lo < 1")

    @classmethod
    def from_costs(cls, c_fa, c_fr, **kwargs):
        return cls(alpha_decision=bayes_alpha(c_fa, c_fr), **kwargs)

    def level(self, pi):
        if pi < self.low_hi:
            return "Low"
        if pi >= self.high_lo:
            return "High"
        return "Med"


@dataclass(frozen=True)
class RiskAssessment:
    dim_id: str
    pi_stat: float
    z_stat: float
    residual: float
    pi: float
    score: float
    level: str
    reason: str
    action: str
    accept: bool


def _rel_position(est, spec):
    if spec is None or spec.lsl is None or spec.usl is None:
        return 0.0
    mid = 0.5 * (spec.lsl + spec.usl)
    return (est.mean - mid) / (0.5 * (spec.usl - spec.lsl))


def reason_action(level, cpk_hat, rel_position, normality_pass, skewness, policy=DecisionPolicy()):
    """First matching rule wins; returns ``(reason, action)``."""
    if level == "Low":
        return ACCEPTABLE, ACCEPT
    if level == "High" and (cpk_hat < policy.cpk_floor or abs(rel_position) > policy.position_limit):
        return MIXED_MECHANISM, REDUCE_SD_RECENTER
    if level == "Med":
        skew = skewness if skewness is not None and math.isfinite(skewness) else 0.0
        if not normality_pass and abs(skew) > policy.skew_limit:
            return SKEWED, REVIEW_DISTRIBUTION
        return LATENT_MODEL_RISK, INVESTIGATE_LATENT_RISK
    return MIXED_MECHANISM, REDUCE_SD_RECENTER


def decision_chain(pi, est, pi_stat, policy=DecisionPolicy(), dim_id="", z_stat=None, residual=0.0, spec=None):
    """Build the full assessment for one dimension.

    ``est`` is the dimension's :class:`~uccap.capability.CapabilityEstimate`;
    ``spec`` supplies the limits for the relative-position rule (omit for
    unilateral dimensions).
    """
    if z_stat is None:
        p = min(max(pi_stat, 1e-12), 1.0 - 1e-12)
        z_stat = math.log(p) - math.log1p(-p)
    level = policy.level(pi)
    reason, action = reason_action(level, est.cpk_hat, _rel_position(est, spec),
                                   est.normality_pass, est.skewness, policy)
    return RiskAssessment(
        dim_id=dim_id,
        pi_stat=float(pi_stat),
        z_stat=float(z_stat),
        residual=float(residual),
        pi=float(pi),
        score=100.0 * pi,
        level=level,
        reason=reason,
        action=action,
        accept=decide(pi, policy.alpha_decision),
    )
