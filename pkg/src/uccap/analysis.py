"""One dimension end to end: estimate, bootstrap SE, baseline risk, features."""

from dataclasses import dataclass

import numpy as np

from .capability import CapabilityEstimate, DimensionSample, estimate_capability
from .features import extract_features
from .uncertainty import DEFAULT_N_BOOT, EPSILON_CLIP, BaselineRisk, baseline_risk, bootstrap_se


@dataclass(frozen=True)
class DimensionAnalysis:
    sample: DimensionSample
    estimate: CapabilityEstimate
    baseline: BaselineRisk
    features: np.ndarray

    @property
    def cpk_hat(self):
        return self.estimate.cpk_hat

    @property
    def se(self):
        return self.baseline.se

    @property
    def z_stat(self):
        return self.baseline.z_stat

    @property
    def pi_stat(self):
        return self.baseline.pi_stat


def analyze_sample(sample, c0=1.33, n_boot=DEFAULT_N_BOOT, policy="auto", rng=0, epsilon_clip=EPSILON_CLIP):
    """Run the production estimation path on one sample.

    The bootstrap re-runs whichever method (and fitted family) the policy
    picked, so the SE belongs to the reported estimate.
    """
    est = estimate_capability(sample, policy)
    se = bootstrap_se(sample, n_boot, est, rng_seed=rng)
    return DimensionAnalysis(sample, est, baseline_risk(est.cpk_hat, se, c0, epsilon_clip), extract_features(sample, est))
