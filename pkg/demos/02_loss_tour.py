"""A tour of the censored regression loss and the joint objective.

The regression head is trained against an asymmetric piecewise-quadratic
loss with three branches, chosen per scan by the patient flag p and the
defined progression time t_d (margin epsilon, default 1):

  p = 0 (non-cancer, right-censored):  penalize only predictions below
        t_d + eps; anything later than the censoring horizon is free.
  p = 1, t_d > eps (early scan of a cancer patient): plain quadratic
        pulled toward t_d - eps.
  p = 1, t_d <= eps (scan at/after diagnosis): penalize only predictions
        above t_d - eps; pushing further negative is free.
"""

import numpy as np

from cfpt import LossConfig, ScanLabel, Prediction, batch_loss, cel, crl, crl_grad, joint_loss

eps = 1.0

# --- the three branches, tabulated ------------------------------------------

print("t_pred   censored t_d=3   cancer t_d=3   cancer t_d=0.5")
for t_pred in np.arange(-1.0, 6.5, 0.5):
    print(f"{t_pred:6.1f}   {crl(t_pred, 3.0, 0, eps):14.2f}   "
          f"{crl(t_pred, 3.0, 1, eps):12.2f}   {crl(t_pred, 0.5, 1, eps):14.2f}")

# zero regions: censored scans are free above t_d + eps, diagnosed scans
# below t_d - eps
assert crl(4.0, 3.0, 0, eps) == 0.0 and crl(9.9, 3.0, 0, eps) == 0.0
assert crl(-0.5, 0.5, 1, eps) == 0.0 and crl(-7.0, 0.5, 1, eps) == 0.0

# --- gradients are exact and continuous across the clamp points --------------

for t_pred, t_d, p in [(2.0, 3.0, 0), (5.0, 3.0, 1), (1.2, 0.5, 1)]:
    g = crl_grad(t_pred, t_d, p, eps)
    h = 1e-6
    fd = (crl(t_pred + h, t_d, p, eps) - crl(t_pred - h, t_d, p, eps)) / (2 * h)
    print(f"grad at ({t_pred}, t_d={t_d}, p={p}): analytic {g:+.4f}  fd {fd:+.4f}")

kink = 3.0 + eps  # censored-branch clamp point
print(f"grad just left/right of the clamp: "
      f"{crl_grad(kink - 1e-9, 3.0, 0, eps):+.2e} / {crl_grad(kink + 1e-9, 3.0, 0, eps):+.2e}")

# --- the joint objective ------------------------------------------------------
# L = lambda * crl + cel, averaged over the batch. lambda = 0 recovers a
# pure classifier; the regression head then gets no training signal.

cfg = LossConfig(lam=0.5, epsilon=1.0)
label = ScanLabel(scan_id="s0", patient_id="p0", t_d=2.0, p=1, y=0, right_censored=False)
pred = Prediction(scan_id="s0", y_hat=0.3, t_pred=1.5)
print(f"joint = lambda*crl + cel = {cfg.lam}*{crl(1.5, 2.0, 1, eps):.4f} + "
      f"{cel(0.3, 0):.4f} = {joint_loss(pred, label, cfg):.4f}")

labels = [
    label,
    ScanLabel(scan_id="s1", patient_id="p1", t_d=4.0, p=0, y=0, right_censored=True),
]
preds = [pred, Prediction(scan_id="s1", y_hat=0.1, t_pred=5.0)]
per_scan = [joint_loss(pr, lb, cfg) for pr, lb in zip(preds, labels)]
print(f"batch mean {batch_loss(preds, labels, cfg):.4f} = mean of {per_scan}")
