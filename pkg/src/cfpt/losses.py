"""Censored regression loss, binary cross entropy, and their joint objective.

The censored regression loss (``crl``) scores a predicted cancer-free
progression time ``t_pred`` against the defined value ``t_d`` with three
clinically motivated branches, selected by the patient-level cancer
indicator ``p`` and a margin ``epsilon > 0``:

* ``p = 0`` (never diagnosed, right-censored): ``t_d`` is only a lower
  bound, so over-predicting is free.  Loss ``min(0, t_pred - t_d - eps)^2``
  -- zero whenever ``t_pred >= t_d + eps``, quadratic below.
* ``p = 1`` and ``t_d > eps`` (scan well before biopsy): plain quadratic
  pull toward the margin-shifted target, ``(t_pred - t_d + eps)^2``.  The
  true event precedes the biopsy, so the unique minimizer sits at
  ``t_d - eps`` rather than ``t_d``; predictions for these scans are
  systematically shifted down by ``eps`` by design.
* ``p = 1`` and ``t_d <= eps`` (scan at or after the event, boundary
  inclusive): under-predicting is free, ``max(0, t_pred - t_d + eps)^2``.

All three branches are convex and continuously differentiable in
``t_pred``; gradients below are exact closed forms.  Every function here
accepts scalars or numpy arrays (broadcast together) and computes in
double precision.
"""

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .labels import ScanLabel


@dataclass(frozen=True)
class LossConfig:
    """Hyperparameters of the joint objective.

    ``lam`` weights the regression term against cross entropy, ``epsilon``
    is the margin of the censored regression loss, and ``prob_clamp``
    bounds predicted probabilities away from {0, 1} so the log terms stay
    finite.
    """

    lam: float = 0.5
    epsilon: float = 1.0
    prob_clamp: float = 1e-7

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if self.lam < 0:
            raise ValueError(f"lam must be non-negative, got {self.lam}")
        if not 0 < self.prob_clamp < 0.5:
            raise ValueError(
                f"prob_clamp must lie in (0, 0.5), got {self.prob_clamp}"
            )


@dataclass(frozen=True)
class Prediction:
    """Model output for one scan: malignancy probability and predicted CFPT."""

    scan_id: str
    y_hat: float
    t_pred: float


def _as_float_array(x, name):
    a = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite values")
    return a


def _check_binary(x, name):
    a = np.asarray(x)
    if not np.all((a == 0) | (a == 1)):
        raise ValueError(f"{name} must be 0 or 1")
    return a


def crl(t_pred, t_d, p, epsilon):
    """Censored regression loss; see the module docstring for the branches.

    Scalar inputs give a float, array inputs an array of the broadcast
    shape. The branch boundary ``t_d == epsilon`` belongs to the clamped
    (third) case.
    """
    if not np.all(np.asarray(epsilon) > 0):
        raise ValueError("epsilon must be positive")
    tp = _as_float_array(t_pred, "t_pred")
    td = _as_float_array(t_d, "t_d")
    pp = _check_binary(p, "p")
    eps = _as_float_array(epsilon, "epsilon")

    censored = np.minimum(0.0, tp - td - eps) ** 2
    over = np.square(tp - td + eps)
    clamped = np.maximum(0.0, tp - td + eps) ** 2
    value = np.where(pp == 0, censored, np.where(td > eps, over, clamped))
    return float(value) if value.ndim == 0 else value


def crl_grad(t_pred, t_d, p, epsilon):
    """Derivative of :func:`crl` with respect to ``t_pred``.

    The clamped branches are continuously differentiable at their kinks
    (the quadratic and the flat region meet with slope zero), so the
    one-sided value returned there agrees from both sides.
    """
    if not np.all(np.asarray(epsilon) > 0):
        raise ValueError("epsilon must be positive")
    tp = _as_float_array(t_pred, "t_pred")
    td = _as_float_array(t_d, "t_d")
    pp = _check_binary(p, "p")
    eps = _as_float_array(epsilon, "epsilon")

    g_censored = 2.0 * np.minimum(0.0, tp - td - eps)
    g_over = 2.0 * (tp - td + eps)
    g_clamped = 2.0 * np.maximum(0.0, tp - td + eps)
    grad = np.where(pp == 0, g_censored, np.where(td > eps, g_over, g_clamped))
    return float(grad) if grad.ndim == 0 else grad


def cel(y_hat, y, prob_clamp=1e-7):
    """Two-class cross entropy with the probability clamped into
    ``[prob_clamp, 1 - prob_clamp]`` before the logs."""
    yh = _as_float_array(y_hat, "y_hat")
    if np.any(yh < 0) or np.any(yh > 1):
        raise ValueError("y_hat must lie in [0, 1]")
    yy = _check_binary(y, "y")
    if not 0 < prob_clamp < 0.5:
        raise ValueError(f"prob_clamp must lie in (0, 0.5), got {prob_clamp}")
    q = np.clip(yh, prob_clamp, 1.0 - prob_clamp)
    value = -(yy * np.log(q) + (1 - yy) * np.log1p(-q))
    return float(value) if value.ndim == 0 else value


def cel_grad_logit(logit, y):
    """Derivative of ``cel(sigmoid(logit), y)`` with respect to the logit.

    The composition collapses to ``sigmoid(logit) - y`` exactly; the
    probability clamp is a numerical guard on the loss value only and is
    ignored here (it only matters at |logit| beyond ~16 where the gradient
    is vanishing anyway).
    """
    lg = _as_float_array(logit, "logit")
    yy = _check_binary(y, "y")
    grad = expit(lg) - yy
    return float(grad) if grad.ndim == 0 else grad


def joint_loss(pred: Prediction, label: ScanLabel, cfg: LossConfig) -> float:
    """Weighted sum ``lam * crl + cel`` for a single scan."""
    reg = crl(pred.t_pred, label.t_d, label.p, cfg.epsilon)
    cls = cel(pred.y_hat, label.y, cfg.prob_clamp)
    return cfg.lam * reg + cls


def batch_loss(preds, labels, cfg: LossConfig) -> float:
    """Arithmetic mean of :func:`joint_loss` over a batch.

    The mean (rather than sum) reduction keeps the meaning of ``lam``
    independent of batch size. Predictions and labels must pair up by
    ``scan_id`` in order.
    """
    if len(preds) != len(labels):
        raise ValueError(
            f"batch length mismatch: {len(preds)} predictions, {len(labels)} labels"
        )
    if len(preds) == 0:
        raise ValueError("batch_loss of an empty batch is undefined")
    for pr, lb in zip(preds, labels):
        if pr.scan_id != lb.scan_id:
            raise ValueError(
                f"scan_id mismatch in batch: {pr.scan_id!r} vs {lb.scan_id!r}"
            )
    t_pred = np.array([pr.t_pred for pr in preds])
    y_hat = np.array([pr.y_hat for pr in preds])
    t_d = np.array([lb.t_d for lb in labels])
    p = np.array([lb.p for lb in labels])
    y = np.array([lb.y for lb in labels])
    total = cfg.lam * crl(t_pred, t_d, p, cfg.epsilon) + cel(y_hat, y, cfg.prob_clamp)
    return float(np.mean(total))
