"""Capability indices, normality diagnostics and best-fit distributions.

The single-sample functions (:func:`estimate_cpk_normal`,
:func:`estimate_cpk_percentile`, :func:`estimate_capability`, ...) are thin
wrappers over the row-wise batch engine (:func:`cpk_batch`,
:func:`cpk_policy_batch`).  Bootstrap and Monte Carlo code call the batch
engine directly, so every estimate in the package goes through one code path.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import log_ndtr, ndtr

from . import distributions as dist
from .exceptions import (
    DegenerateSample,
    InvalidSpec,
    MissingSpec,
    NoFeasibleFamily,
    QuantileCollapse,
    TooFewSamples,
)

# Phi(-3) and Phi(3): the 0.135 % / 99.865 % points, taken exactly so that the
# percentile definition coincides with the normal one on normal quantiles.
P_LO = float(ndtr(-3.0))
P_MID = 0.5
P_HI = float(ndtr(3.0))

AD_CRITICAL_5PCT = 0.752
MIN_DIAGNOSTIC_N = 8

POLICIES = ("auto", "normal_only", "percentile_only")


@dataclass(frozen=True)
class SpecLimits:
    lsl: Optional[float] = None
    usl: Optional[float] = None
    nominal: Optional[float] = None

    def __post_init__(self):
        if self.lsl is None and self.usl is None:
            raise MissingSpec("at least one of lsl/usl is required")
        for name in ("lsl", "usl", "nominal"):
            v = getattr(self, name)
            if v is not None and not np.isfinite(v):
                raise InvalidSpec(f"{name} must be finite, got {v!r}")
        if self.lsl is not None and self.usl is not None and not self.lsl < self.usl:
            raise InvalidSpec(f"lsl ({self.lsl}) must be < usl ({self.usl})")

    @property
    def bilateral(self):
        return self.lsl is not None and self.usl is not None

    def transform(self, a, b):
        """Limits under x -> a*x + b (a > 0)."""
        f = lambda v: None if v is None else a * v + b  # noqa: E731
        return SpecLimits(f(self.lsl), f(self.usl), f(self.nominal))


@dataclass(frozen=True)
class DimensionSample:
    dim_id: str
    values: np.ndarray
    spec: SpecLimits

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim != 1 or values.size < 2:
            raise TooFewSamples(f"{self.dim_id}: need at least 2 values")
        if not np.all(np.isfinite(values)):
            raise DegenerateSample(f"{self.dim_id}: non-finite measurement")
        if not values.std(ddof=1) > 0:
            raise DegenerateSample(f"{self.dim_id}: constant sample (sd = 0)")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self):
        return self.values.size


@dataclass(frozen=True)
class CapabilityEstimate:
    cpk_hat: float
    method: str  # "normal" | "percentile"
    mean: float
    sd: float
    skewness: float
    excess_kurtosis: float
    normality_stat: float
    normality_pass: bool
    best_fit: Optional[str]
    n: int = 0
    family: Optional[str] = None  # family whose quantiles were used; "empirical" for order statistics
    params: tuple = field(default=(), compare=False)


# ---------------------------------------------------------------- batch engine


def _rows(X):
    X = np.asarray(X, dtype=float)
    return X[None, :] if X.ndim == 1 else X


def _one_sided(spec, center, upper_spread, lower_spread):
    """min over the available sides of (limit distance / spread)."""
    out = np.full(np.shape(center), np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        if spec.usl is not None:
            out = np.minimum(out, (spec.usl - center) / upper_spread)
        if spec.lsl is not None:
            out = np.minimum(out, (center - spec.lsl) / lower_spread)
    return out


def cpk_normal_batch(X, spec):
    X = _rows(X)
    mu = X.mean(axis=1)
    sd = X.std(axis=1, ddof=1)
    return _one_sided(spec, mu, 3.0 * sd, 3.0 * sd)


def cpk_from_quantiles(q_lo, q_mid, q_hi, spec):
    """Percentile capability: (USL-q50)/(q99.865-q50) and (q50-LSL)/(q50-q0.135)."""
    return _one_sided(spec, np.asarray(q_mid, float), np.asarray(q_hi, float) - q_mid, q_mid - np.asarray(q_lo, float))


def _quantile_triplet(family, params):
    return (dist.quantile(family, params, P_LO), dist.quantile(family, params, P_MID), dist.quantile(family, params, P_HI))


def cpk_percentile_batch(X, spec, family):
    """Percentile capability row-wise; ``family="empirical"`` uses type-7 quantiles."""
    X = _rows(X)
    if family == "empirical":
        q = np.quantile(X, [P_LO, P_MID, P_HI], axis=1, method="linear")
        return cpk_from_quantiles(q[0], q[1], q[2], spec)
    params, _ = dist.fit_family(family, X)
    return cpk_from_quantiles(*_quantile_triplet(family, params), spec)


def anderson_darling_batch(X):
    """Row-wise Anderson-Darling A^2 against a normal with estimated mean/sd,
    with the small-sample factor (1 + 0.75/n + 2.25/n^2)."""
    X = np.sort(_rows(X), axis=1)
    n = X.shape[1]
    mu = X.mean(axis=1, keepdims=True)
    sd = X.std(axis=1, ddof=1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        w = (X - mu) / sd
    i = np.arange(1, n + 1)
    S = ((2 * i - 1) / n * (log_ndtr(w) + log_ndtr(-w[:, ::-1]))).sum(axis=1)
    a2 = -n - S
    return a2 * (1.0 + 0.75 / n + 2.25 / n**2)


def _feasible(family, X):
    if family in dist.POSITIVE_FAMILIES:
        return np.all(X > 0, axis=1)
    return np.ones(X.shape[0], dtype=bool)


def best_fit_batch(X, families=dist.FAMILIES):
    """Best family per row by maximum log-likelihood.

    Returns ``(index, params_by_family)`` where ``index`` points into
    ``families`` (ties resolved toward the earlier family) and is -1 where no
    candidate is feasible.
    """
    X = _rows(X)
    lls = np.full((len(families), X.shape[0]), -np.inf)
    fitted = {}
    for j, fam in enumerate(families):
        ok = _feasible(fam, X)
        if not ok.any():
            continue
        params, ll = dist.fit_family(fam, X[ok])
        ll = np.where(np.isfinite(ll), ll, -np.inf)
        lls[j, ok] = ll
        full = tuple(np.full(X.shape[0], np.nan) for _ in params)
        for f, p in zip(full, params):
            f[ok] = p
        fitted[fam] = full
    best = np.argmax(lls, axis=0)
    best = np.where(np.isfinite(lls.max(axis=0)), best, -1)
    return best, fitted


def cpk_policy_batch(X, spec, policy="auto"):
    """Production estimator policy applied row-wise.

    ``auto`` uses the normal index when the Anderson-Darling test passes at 5 %
    and the best-fit percentile index otherwise. Returns ``(cpk, used_percentile)``.
    """
    X = _rows(X)
    if policy == "normal_only":
        return cpk_normal_batch(X, spec), np.zeros(X.shape[0], dtype=bool)
    if policy == "auto":
        if X.shape[1] < MIN_DIAGNOSTIC_N:
            return cpk_normal_batch(X, spec), np.zeros(X.shape[0], dtype=bool)
        use_pct = anderson_darling_batch(X) >= AD_CRITICAL_5PCT
    elif policy == "percentile_only":
        use_pct = np.ones(X.shape[0], dtype=bool)
    else:
        raise ValueError(f"unknown estimator policy {policy!r}")
    cpk = cpk_normal_batch(X, spec)
    if use_pct.any():
        sub = X[use_pct]
        best, fitted = best_fit_batch(sub)
        pc = np.full(sub.shape[0], np.nan)
        for j, fam in enumerate(dist.FAMILIES):
            m = best == j
            if m.any():
                params = tuple(p[m] for p in fitted[fam])
                pc[m] = cpk_from_quantiles(*_quantile_triplet(fam, params), spec)
        # rows with no feasible family keep the normal index
        pc = np.where(best >= 0, pc, cpk[use_pct])
        cpk[use_pct] = pc
    return cpk, use_pct


def cpk_method_batch(X, spec, method, family=None):
    """Capability with a fixed method (used when resampling a chosen estimate)."""
    if method == "normal":
        return cpk_normal_batch(X, spec)
    if method == "percentile":
        return cpk_percentile_batch(X, spec, family or "empirical")
    raise ValueError(f"unknown method {method!r}")


# -------------------------------------------------------------- single sample


def _moments(values):
    from scipy.stats import kurtosis, skew

    n = values.size
    if n < 4:
        return float("nan"), float("nan")
    return float(skew(values, bias=False)), float(kurtosis(values, fisher=True, bias=False))


def normality_test(values):
    """Anderson-Darling normality test at the 5 % level.

    Returns ``(adjusted_statistic, passed)``.
    """
    values = np.asarray(values, dtype=float)
    if values.size < MIN_DIAGNOSTIC_N:
        raise TooFewSamples(f"normality test needs n >= {MIN_DIAGNOSTIC_N}, got {values.size}")
    stat = float(anderson_darling_batch(values)[0])
    return stat, bool(stat < AD_CRITICAL_5PCT)


def fit_distribution(values, families=dist.FAMILIES):
    """Maximum-likelihood fit of each candidate family; keep the best.

    Lognormal and Weibull are skipped unless every value is strictly positive.

    Returns
    -------
    best : str
    params : tuple of float
    logliks : dict
        Log-likelihood per feasible family.
    """
    values = np.asarray(values, dtype=float)
    if values.size < MIN_DIAGNOSTIC_N:
        raise TooFewSamples(f"distribution fit needs n >= {MIN_DIAGNOSTIC_N}, got {values.size}")
    X = values[None, :]
    logliks, params = {}, {}
    for fam in families:
        if not _feasible(fam, X)[0]:
            continue
        p, ll = dist.fit_family(fam, X)
        if np.isfinite(ll[0]) and all(np.isfinite(v[0]) for v in p):
            logliks[fam] = float(ll[0])
            params[fam] = tuple(float(v[0]) for v in p)
    if not logliks:
        raise NoFeasibleFamily("no candidate family could be fitted")
    best = max(logliks, key=lambda f: (logliks[f], -families.index(f)))
    return best, params[best], logliks


def _require_spec(sample):
    if sample.spec.lsl is None and sample.spec.usl is None:
        raise MissingSpec(f"{sample.dim_id}: no specification limits")


def _diagnostics(sample):
    values = sample.values
    skewness, kurt = _moments(values)
    if values.size >= MIN_DIAGNOSTIC_N:
        stat, passed = normality_test(values)
        try:
            best, params, _ = fit_distribution(values)
        except NoFeasibleFamily:
            best, params = None, ()
    else:
        stat, passed, best, params = float("nan"), True, None, ()
    return dict(
        mean=float(values.mean()),
        sd=float(values.std(ddof=1)),
        skewness=skewness,
        excess_kurtosis=kurt,
        normality_stat=stat,
        normality_pass=passed,
        best_fit=best,
        n=values.size,
    ), params


def estimate_cpk_normal(sample):
    """Normal-theory Cpk with the overall (n-1) standard deviation."""
    _require_spec(sample)
    diag, _ = _diagnostics(sample)
    if not diag["sd"] > 0:
        raise DegenerateSample(f"{sample.dim_id}: sd = 0")
    cpk = float(cpk_normal_batch(sample.values, sample.spec)[0])
    return CapabilityEstimate(cpk_hat=cpk, method="normal", family="normal", **diag)


def estimate_cpk_percentile(sample, family=None, params=None):
    """Percentile Cpk from ISO-style 0.135 / 50 / 99.865 % quantiles.

    Parameters
    ----------
    sample : DimensionSample
    family : str, optional
        Distribution family whose fitted quantiles are used. ``None`` means the
        best-fit family; ``"empirical"`` uses interpolated order statistics.
    params : tuple, optional
        Use these family parameters instead of fitting them.
    """
    _require_spec(sample)
    diag, best_params = _diagnostics(sample)
    if family is None:
        family = diag["best_fit"]
        params = best_params if params is None else params
        if family is None:
            raise NoFeasibleFamily(f"{sample.dim_id}: no family could be fitted")
    if family == "empirical":
        q = np.quantile(sample.values, [P_LO, P_MID, P_HI], method="linear")
        params = ()
    else:
        if params is None:
            if family in dist.POSITIVE_FAMILIES and np.any(sample.values <= 0):
                raise NoFeasibleFamily(f"{family} requires strictly positive values")
            p, _ = dist.fit_family(family, sample.values)
            params = tuple(float(v[0]) for v in p)
        q = [float(v) for v in _quantile_triplet(family, params)]
    if not (q[2] > q[1] and q[1] > q[0]):
        raise QuantileCollapse(f"{sample.dim_id}: quantiles collapsed {q}")
    cpk = float(cpk_from_quantiles(q[0], q[1], q[2], sample.spec))
    return CapabilityEstimate(cpk_hat=cpk, method="percentile", family=family, params=tuple(params), **diag)


def estimate_capability(sample, policy="auto"):
    """Estimate Cpk under the production estimator policy.

    ``auto`` switches to the best-fit percentile estimate when the normality
    test fails; ``normal_only`` and ``percentile_only`` force one method.
    """
    if policy not in POLICIES:
        raise ValueError(f"unknown estimator policy {policy!r}")
    if policy == "normal_only":
        return estimate_cpk_normal(sample)
    if policy == "percentile_only":
        return estimate_cpk_percentile(sample)
    est = estimate_cpk_normal(sample)
    if est.normality_pass or est.best_fit is None:
        return est
    return estimate_cpk_percentile(sample)
