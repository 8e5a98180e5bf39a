"""Row-wise maximum-likelihood fits for the four candidate families.

All functions take a 2-D array ``X`` of shape ``(batch, n)`` and fit every
row independently, so a whole bootstrap or Monte Carlo replicate matrix is
handled in one call. Parameters come back as a pair of arrays
``(loc_like, scale_like)``:

* normal    -> (mu, sigma)             sigma is the MLE (ddof=0)
* lognormal -> (mu_log, sigma_log)
* weibull   -> (shape k, scale lam)    two-parameter, location fixed at 0
* logistic  -> (mu, s)
"""

import numpy as np
from scipy.special import log_ndtr, ndtri

# Order doubles as the tie-break preference in best-fit selection.
FAMILIES = ("normal", "logistic", "lognormal", "weibull")
POSITIVE_FAMILIES = ("lognormal", "weibull")

_LOG_2PI = np.log(2.0 * np.pi)


def _as_rows(X):
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[None, :]
    return X


def fit_normal(X):
    X = _as_rows(X)
    n = X.shape[1]
    mu = X.mean(axis=1)
    sigma = np.sqrt(((X - mu[:, None]) ** 2).mean(axis=1))
    with np.errstate(divide="ignore"):
        ll = -0.5 * n * (_LOG_2PI + 2.0 * np.log(sigma) + 1.0)
    return (mu, sigma), ll


def fit_lognormal(X):
    X = _as_rows(X)
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.log(X)
    (mu, sigma), ll = fit_normal(L)
    return (mu, sigma), ll - L.sum(axis=1)


def _weibull_score(k, L, Lmax, Lbar):
    # f(k) = sum(x^k ln x)/sum(x^k) - 1/k - mean(ln x); increasing in k.
    w = np.exp(k[:, None] * (L - Lmax[:, None]))
    sw = w.sum(axis=1)
    m1 = (w * L).sum(axis=1) / sw
    m2 = (w * L * L).sum(axis=1) / sw
    f = m1 - 1.0 / k - Lbar
    df = (m2 - m1 * m1) + 1.0 / (k * k)
    return f, df


def fit_weibull(X, max_iter=200, tol=1e-12):
    """Two-parameter Weibull MLE via safeguarded Newton on the shape equation."""
    X = _as_rows(X)
    n = X.shape[1]
    with np.errstate(divide="ignore", invalid="ignore"):
        L = np.log(X)
    Lmax = L.max(axis=1)
    Lbar = L.mean(axis=1)
    sdL = L.std(axis=1)
    with np.errstate(divide="ignore"):
        u = np.log(1.2825 / sdL)  # Gumbel moment estimate of log-shape

    lo = u - 1.0
    hi = u + 1.0
    for _ in range(60):
        f_lo, _ = _weibull_score(np.exp(lo), L, Lmax, Lbar)
        bad = f_lo > 0
        if not bad.any():
            break
        lo = np.where(bad, lo - 1.0, lo)
    for _ in range(60):
        f_hi, _ = _weibull_score(np.exp(hi), L, Lmax, Lbar)
        bad = f_hi < 0
        if not bad.any():
            break
        hi = np.where(bad, hi + 1.0, hi)

    for _ in range(max_iter):
        k = np.exp(u)
        f, df = _weibull_score(k, L, Lmax, Lbar)
        lo = np.where(f < 0, u, lo)
        hi = np.where(f > 0, u, hi)
        step = f / (df * k)
        u_new = u - step
        outside = ~((u_new > lo) & (u_new < hi))
        u_new = np.where(outside, 0.5 * (lo + hi), u_new)
        if np.all(np.abs(u_new - u) < tol):
            u = u_new
            break
        u = u_new

    k = np.exp(u)
    # lam^k = mean(x^k), computed on the shifted log scale to avoid overflow
    log_mean_xk = np.log(np.exp(k[:, None] * (L - Lmax[:, None])).mean(axis=1)) + k * Lmax
    lam = np.exp(log_mean_xk / k)
    ll = n * np.log(k) - n * k * np.log(lam) + (k - 1.0) * L.sum(axis=1) - n
    return (k, lam), ll


def _logistic_ll(X, mu, tau):
    s = np.exp(tau)
    u = (X - mu[:, None]) / s[:, None]
    # log pdf = -u - 2 log(1 + e^-u) - log s, written symmetric in u
    return (-np.abs(u) - 2.0 * np.log1p(np.exp(-np.abs(u)))).sum(axis=1) - X.shape[1] * tau


def fit_logistic(X, max_iter=100, tol=1e-12):
    """Logistic MLE by damped Newton on (mu, log s)."""
    X = _as_rows(X)
    mu = np.median(X, axis=1)
    tau = np.log(X.std(axis=1) * np.sqrt(3.0) / np.pi)
    ll = _logistic_ll(X, mu, tau)
    for _ in range(max_iter):
        s = np.exp(tau)
        u = (X - mu[:, None]) / s[:, None]
        th = np.tanh(0.5 * u)
        sech2 = 1.0 - th * th
        g_mu = th.sum(axis=1) / s
        g_tau = (u * th).sum(axis=1) - X.shape[1]
        h_mm = -0.5 * sech2.sum(axis=1) / (s * s)
        h_mt = -(0.5 * u * sech2 + th).sum(axis=1) / s
        h_tt = -(u * th + 0.5 * u * u * sech2).sum(axis=1)
        det = h_mm * h_tt - h_mt * h_mt
        # Newton direction where the Hessian is negative definite, else gradient ascent
        nd = (h_mm < 0) & (det > 0)
        safe_det = np.where(nd, det, 1.0)
        d_mu = np.where(nd, -(h_tt * g_mu - h_mt * g_tau) / safe_det, g_mu * s * s)
        d_tau = np.where(nd, -(-h_mt * g_mu + h_mm * g_tau) / safe_det, g_tau / X.shape[1])
        step = np.ones_like(mu)
        accepted = np.zeros(mu.shape, dtype=bool)
        new_mu, new_tau, new_ll = mu, tau, ll
        for _ in range(30):
            cand_mu = mu + step * d_mu
            cand_tau = tau + step * d_tau
            cand_ll = _logistic_ll(X, cand_mu, cand_tau)
            ok = (cand_ll >= ll - 1e-12 * np.abs(ll)) & ~accepted
            new_mu = np.where(ok, cand_mu, new_mu)
            new_tau = np.where(ok, cand_tau, new_tau)
            new_ll = np.where(ok, cand_ll, new_ll)
            accepted |= ok
            if accepted.all():
                break
            step = np.where(accepted, step, 0.5 * step)
        delta = np.maximum(np.abs(new_mu - mu) / np.exp(tau), np.abs(new_tau - tau))
        mu, tau, ll = new_mu, new_tau, new_ll
        if np.all(delta < tol):
            break
    return (mu, np.exp(tau)), ll


_FITTERS = {
    "normal": fit_normal,
    "lognormal": fit_lognormal,
    "weibull": fit_weibull,
    "logistic": fit_logistic,
}


def fit_family(family, X):
    """Fit ``family`` row-wise; returns ``(params, loglik)``."""
    try:
        fitter = _FITTERS[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}") from None
    return fitter(X)


def quantile(family, params, p):
    """Quantile function of ``family`` at probability ``p`` (broadcasts)."""
    a, b = (np.asarray(v, dtype=float) for v in params)
    if family == "normal":
        return a + b * ndtri(p)
    if family == "lognormal":
        return np.exp(a + b * ndtri(p))
    if family == "weibull":
        return b * (-np.log1p(-p)) ** (1.0 / a)
    if family == "logistic":
        return a + b * np.log(p / (1.0 - p))
    raise ValueError(f"unknown family {family!r}")


def cdf(family, params, x):
    a, b = (np.asarray(v, dtype=float) for v in params)
    x = np.asarray(x, dtype=float)
    if family == "normal":
        return np.exp(log_ndtr((x - a) / b))
    if family == "lognormal":
        with np.errstate(divide="ignore"):
            return np.where(x > 0, np.exp(log_ndtr((np.log(np.maximum(x, 1e-300)) - a) / b)), 0.0)
    if family == "weibull":
        return np.where(x > 0, -np.expm1(-(np.maximum(x, 0.0) / b) ** a), 0.0)
    if family == "logistic":
        return 0.5 * (1.0 + np.tanh(0.5 * (x - a) / b))
    raise ValueError(f"unknown family {family!r}")


def sample(family, params, size, rng):
    """Draw ``size`` variates from ``family`` using generator ``rng``."""
    a, b = params
    if family == "normal":
        return rng.normal(a, b, size=size)
    if family == "lognormal":
        return np.exp(rng.normal(a, b, size=size))
    if family == "weibull":
        return b * rng.weibull(a, size=size)
    if family == "logistic":
        return rng.logistic(a, b, size=size)
    raise ValueError(f"unknown family {family!r}")
