"""Bootstrap standard error of Cpk and the statistical baseline risk."""

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, expit

from .capability import CapabilityEstimate, cpk_method_batch
from .exceptions import DegenerateBootstrap, NonpositiveSE, TooFewBoot

EPSILON_CLIP = 1e-6
DEFAULT_N_BOOT = 100
MIN_N_BOOT = 50
MAX_REDRAWS = 10


def norm_cdf(z):
    """Standard normal CDF via the complementary error function."""
    return 0.5 * erfc(-np.asarray(z, dtype=float) / math.sqrt(2.0))


def sigmoid(t):
    return expit(t)


def logit(p):
    p = np.asarray(p, dtype=float)
    return np.log(p) - np.log1p(-p)


@dataclass(frozen=True)
class BaselineRisk:
    se: float
    pi_stat: float
    z_stat: float
    c0: float
    cpk_hat: float
    epsilon_clip: float = EPSILON_CLIP
    pi_raw: float = float("nan")  # before clipping


def baseline_risk(cpk_hat, se, c0, epsilon_clip=EPSILON_CLIP):
    """pi_stat = clip(Phi((c0 - cpk_hat)/se)) and its log-odds z_stat."""
    if not se > 0 or not math.isfinite(se):
        raise NonpositiveSE(f"standard error must be positive and finite, got {se!r}")
    raw = float(norm_cdf((c0 - cpk_hat) / se))
    pi = min(max(raw, epsilon_clip), 1.0 - epsilon_clip)
    return BaselineRisk(
        se=float(se),
        pi_stat=pi,
        z_stat=float(logit(pi)),
        c0=float(c0),
        cpk_hat=float(cpk_hat),
        epsilon_clip=epsilon_clip,
        pi_raw=raw,
    )


def baseline_risk_array(cpk_hat, se, c0, epsilon_clip=EPSILON_CLIP):
    """Vectorised :func:`baseline_risk`; returns ``(pi_stat, z_stat)``."""
    se = np.asarray(se, dtype=float)
    if np.any(~(se > 0)):
        raise NonpositiveSE("standard errors must be positive")
    pi = np.clip(norm_cdf((c0 - np.asarray(cpk_hat, dtype=float)) / se), epsilon_clip, 1.0 - epsilon_clip)
    return pi, logit(pi)


def bootstrap_indices(n, n_boot, rng, values=None):
    """Resampling index matrix ``(n_boot, n)``.

    When ``values`` is given, rows whose resample has zero spread are redrawn
    (at most ``MAX_REDRAWS`` times each).
    """
    idx = rng.integers(0, n, size=(n_boot, n))
    if values is None:
        return idx
    for _ in range(MAX_REDRAWS):
        bad = np.ptp(values[idx], axis=1) == 0
        if not bad.any():
            return idx
        idx[bad] = rng.integers(0, n, size=(int(bad.sum()), n))
    if np.any(np.ptp(values[idx], axis=1) == 0):
        raise DegenerateBootstrap("resamples kept collapsing to a constant")
    return idx


def bootstrap_cpk(sample, n_boot=DEFAULT_N_BOOT, estimator="normal", family=None, rng_seed=0):
    """Cpk over ``n_boot`` nonparametric resamples of ``sample``."""
    if n_boot < MIN_N_BOOT:
        raise TooFewBoot(f"n_boot must be >= {MIN_N_BOOT}, got {n_boot}")
    if isinstance(estimator, CapabilityEstimate):
        method, family = estimator.method, estimator.family
    else:
        method = estimator
    rng = rng_seed if isinstance(rng_seed, np.random.Generator) else np.random.default_rng(rng_seed)
    values = sample.values
    idx = bootstrap_indices(values.size, n_boot, rng, values)
    return cpk_method_batch(values[idx], sample.spec, method, family if method == "percentile" else None)


def bootstrap_se(sample, n_boot=DEFAULT_N_BOOT, estimator="normal", family=None, rng_seed=0):
    """Bootstrap standard error of Cpk.

    Parameters
    ----------
    sample : DimensionSample
    n_boot : int
        Number of resamples, at least 50.
    estimator : {"normal", "percentile"} or CapabilityEstimate
        Method to re-run on every resample. Passing an estimate reuses its
        method and (for percentile estimates) its family.
    family : str, optional
        Quantile family for percentile resampling (``"empirical"`` default).
    rng_seed : int or numpy Generator

    Returns
    -------
    float
        Sample standard deviation (ddof=1) of the bootstrap replicates.
    """
    reps = bootstrap_cpk(sample, n_boot, estimator, family, rng_seed)
    reps = reps[np.isfinite(reps)]
    if reps.size < 2:
        raise DegenerateBootstrap("too few finite bootstrap replicates")
    return float(reps.std(ddof=1))

