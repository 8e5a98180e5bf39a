"""Training losses and the two model objectives with analytic gradients.

Losses are weighted sums over items, matching the way the objectives are
written down; the trainer divides by the total weight only to make the step
size independent of the dataset size, which leaves the minimiser unchanged.
"""

import math

import numpy as np
from scipy.special import log_ndtr

from .exceptions import LengthMismatch

PRED_CLIP = 1e-12
_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def _prepare(pred, y, weights):
    pred = np.asarray(pred, dtype=float)
    y = np.asarray(y, dtype=float)
    if pred.shape != y.shape:
        raise LengthMismatch(f"pred has {pred.size} items, targets {y.size}")
    if weights is None:
        w = np.ones_like(pred)
    else:
        w = np.asarray(weights, dtype=float)
        if w.shape != pred.shape:
            raise LengthMismatch(f"weights have {w.size} items, expected {pred.size}")
    return np.clip(pred, PRED_CLIP, 1.0 - PRED_CLIP), y, w


def loss_soft_ce(pred, y_soft, weights=None):
    """Weighted cross-entropy against targets in [0, 1], summed."""
    p, y, w = _prepare(pred, y_soft, weights)
    return float(-(w * (y * np.log(p) + (1.0 - y) * np.log1p(-p))).sum())


def loss_bce(pred, y, weights=None):
    """Weighted binary cross-entropy (Bernoulli negative log-likelihood), summed."""
    return loss_soft_ce(pred, y, weights)


def loss_brier(pred, y_soft, weights=None):
    p, y, w = _prepare(pred, y_soft, weights)
    return float((w * (p - y) ** 2).sum())


def loss_l2(theta, lambda2):
    theta = np.asarray(theta, dtype=float)
    return float(lambda2 * theta @ theta)


def loss_composite(pred, y, c_learned, c_stat, lambda_cap, weights=None):
    """Risk cross-entropy plus lambda_cap * sum (C_learned - C_stat)^2."""
    c_learned = np.asarray(c_learned, dtype=float)
    c_stat = np.asarray(c_stat, dtype=float)
    if c_learned.shape != c_stat.shape or c_learned.size != np.size(pred):
        raise LengthMismatch("capability vectors must match the predictions")
    return loss_bce(pred, y, weights) + float(lambda_cap * ((c_learned - c_stat) ** 2).sum())


# ------------------------------------------------------------------ objectives


def _log_sigmoid(eta):
    return -np.logaddexp(0.0, -eta)


def _eta_loss(eta, y, w, loss):
    """Summed loss as a function of the logit, and d(loss)/d(eta) per item."""
    if loss in ("bce", "soft_ce"):
        val = -(w * (y * _log_sigmoid(eta) + (1.0 - y) * _log_sigmoid(-eta))).sum()
        p = 1.0 / (1.0 + np.exp(-eta))
        return val, w * (p - y)
    if loss == "brier":
        p = 1.0 / (1.0 + np.exp(-eta))
        r = p - y
        return (w * r * r).sum(), 2.0 * w * r * p * (1.0 - p)
    raise ValueError(f"unknown loss {loss!r}")


def residual_objective(params, Xs, z, y, w, loss="soft_ce", lambda2=0.0, alpha_r=1.0, free=False):
    """Objective of the additive log-odds model and its gradient.

    ``params`` is ``[theta..., bias]`` (anchored) or ``[theta..., bias, anchor]``
    (free). The logit is ``anchor * z + alpha_r * (Xs @ theta + bias)`` with the
    anchor fixed at 1 when not free. The L2 term covers theta only.
    """
    d = Xs.shape[1]
    theta = params[:d]
    bias = params[d]
    anchor = params[d + 1] if free else 1.0
    eta = anchor * z + alpha_r * (Xs @ theta + bias)
    val, g_eta = _eta_loss(eta, y, w, loss)
    val += lambda2 * theta @ theta
    grad = np.empty_like(params)
    grad[:d] = alpha_r * (Xs.T @ g_eta) + 2.0 * lambda2 * theta
    grad[d] = alpha_r * g_eta.sum()
    if free:
        grad[d + 1] = g_eta @ z
    return float(val), grad


def _mills(t):
    # phi(t) / Phi(t), stable for large negative t
    return np.exp(-0.5 * t * t - _LOG_SQRT_2PI - log_ndtr(t))


def latent_objective(params, Xs, cpk_hat, se, y, w, c0, lambda_cap=1.0, lambda2=0.0):
    """Composite objective of the latent-capability head and its gradient.

    ``C_learned = cpk_hat + Xs @ phi + phi0`` and
    ``pi = Phi((c0 - C_learned) / se)``; the capability penalty pulls
    ``C_learned`` toward ``cpk_hat``.
    """
    d = Xs.shape[1]
    phi = params[:d]
    offset = Xs @ phi + params[d]
    c = cpk_hat + offset
    t = (c0 - c) / se
    val = -(w * (y * log_ndtr(t) + (1.0 - y) * log_ndtr(-t))).sum()
    val += lambda_cap * (offset @ offset) + lambda2 * phi @ phi
    dl_dt = -w * (y * _mills(t) - (1.0 - y) * _mills(-t))
    dl_dc = -dl_dt / se + 2.0 * lambda_cap * offset
    grad = np.empty_like(params)
    grad[:d] = Xs.T @ dl_dc + 2.0 * lambda2 * phi
    grad[d] = dl_dc.sum()
    return float(val), grad
