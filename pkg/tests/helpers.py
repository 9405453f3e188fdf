"""Independent oracles and random-input generators shared by the tests.

Everything here is written from first principles (plain branches, explicit
enumeration, finite differences) and must stay independent of the library
code it checks.
"""

import math

import numpy as np

from cfpt.labels import PatientRecord, effective_biopsy_time


# ---------------------------------------------------------------------------
# censored regression loss: independent scalar three-branch evaluation


def crl_oracle(t_pred, t_d, p, eps):
    if p == 0:
        u = t_pred - t_d - eps
        return (u * u) if u < 0 else 0.0
    v = t_pred - t_d + eps
    if t_d > eps:
        return v * v
    return (v * v) if v > 0 else 0.0


def central_diff(f, x, h=1e-5):
    return (f(x + h) - f(x - h)) / (2.0 * h)


def crl_kink_distance(t_pred, t_d, p, eps):
    """Distance from t_pred to the nearest non-differentiable-looking clamp
    point of its branch (inf for the pure quadratic branch)."""
    if p == 0:
        return abs(t_pred - (t_d + eps))
    if t_d > eps:
        return math.inf
    return abs(t_pred - (t_d - eps))


# ---------------------------------------------------------------------------
# AUC: exhaustive positive-negative pair comparison


def auc_pairwise_oracle(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    diff = pos[:, None] - neg[None, :]
    wins = np.sum(diff > 0) + 0.5 * np.sum(diff == 0)
    return wins / (len(pos) * len(neg))


# ---------------------------------------------------------------------------
# Kaplan-Meier: brute-force risk-set recomputation


def km_oracle(times, event):
    """Recompute S at each distinct event time by counting risk sets from
    scratch (subjects with time >= t are at risk at t)."""
    times = np.asarray(times, dtype=float)
    event = np.asarray(event)
    event_times = sorted(set(times[event == 1].tolist()))
    out = []
    s = 1.0
    for t in event_times:
        at_risk = int(np.sum(times >= t))
        d = int(np.sum((times == t) & (event == 1)))
        s *= 1.0 - d / at_risk
        out.append((t, s, at_risk, d))
    return out


# ---------------------------------------------------------------------------
# exact binomial tail for the paired test


def binomial_two_sided_oracle(k_small, n):
    """Doubled lower tail of Binomial(n, 1/2), capped at 1."""
    tail = sum(math.comb(n, i) for i in range(k_small + 1)) / 2.0**n
    return min(1.0, 2.0 * tail)


# ---------------------------------------------------------------------------
# random inputs


def random_patient_record(rng, pid=None):
    """A random record that satisfies the record invariants by construction.

    Covers cancer/non-cancer, present/absent diagnosis times, diagnosis
    before the first scan, between scans, and after the last scan.
    """
    n_scans = int(rng.integers(1, 9))
    start = rng.uniform(0.0, 3.0)
    gaps = rng.uniform(0.1, 2.0, size=n_scans - 1)
    times = tuple(np.concatenate([[start], start + np.cumsum(gaps)]).tolist())
    is_cancer = rng.uniform() < 0.4
    diagnosis = None
    if is_cancer and rng.uniform() < 0.7:
        diagnosis = float(rng.uniform(times[0] - 1.0, times[-1] + 2.0))
    return PatientRecord(
        patient_id=pid or f"r{rng.integers(0, 10**9)}",
        scan_times=times,
        is_cancer=bool(is_cancer),
        diagnosis_time=diagnosis,
    )


def random_network_instance(rng, n=5, input_dim=4, hidden=(6, 5)):
    """Random net + batch away from crl and rectifier kinks.

    Pre-activations are recomputed here from the raw parameters so the
    rejection step does not depend on the library forward pass.
    """
    from cfpt.model import ModelConfig, init_params

    cfg = ModelConfig(input_dim=input_dim, hidden_dims=hidden, seed=int(rng.integers(1 << 30)))
    while True:
        params = init_params(cfg, t_d_mean=float(rng.uniform(0, 3)))
        for k in params:
            params[k] = params[k] + rng.normal(0, 0.3, size=params[k].shape)
        X = rng.normal(0, 1.5, size=(n, input_dim))
        t_d = rng.uniform(-3, 6, size=n)
        p = rng.integers(0, 2, size=n)
        y = rng.integers(0, 2, size=n)

        h = X
        z_min = np.inf
        for i in range(len(hidden)):
            z = h @ params[f"W{i}"] + params[f"b{i}"]
            z_min = min(z_min, float(np.min(np.abs(z))))
            h = np.maximum(0.0, z)
        t_pred = h @ params["w_reg"] + params["b_reg"][0]
        kink = min(
            crl_kink_distance(float(tp), float(td), int(pp), 1.0)
            for tp, td, pp in zip(t_pred, t_d, p)
        )
        if z_min > 1e-4 and kink > 1e-3:
            return params, X, t_d, p, y


def check_label_invariants(rec, labels):
    """All labels-module invariants for one record (plain asserts)."""
    assert len(labels) == len(rec.scan_times)
    assert [lb.patient_id for lb in labels] == [rec.patient_id] * len(labels)
    for lb in labels:
        assert lb.right_censored == (lb.p == 0)
        if lb.p == 0:
            assert lb.y == 0
            assert lb.t_d >= 1.0

    if not rec.is_cancer:
        t_ds = [lb.t_d for lb in labels]
        assert min(t_ds) == 1.0
        for (ta, tb), (sa, sb) in zip(
            zip(t_ds, t_ds[1:]), zip(rec.scan_times, rec.scan_times[1:])
        ):
            # consecutive differences mirror the scan spacing
            assert abs((ta - tb) - (sb - sa)) <= 1e-12
    else:
        b = effective_biopsy_time(rec)
        pre = [k for k, t in enumerate(rec.scan_times) if t <= b]
        expected_pos = {k for k, t in enumerate(rec.scan_times) if t > b}
        if pre:
            expected_pos.add(max(pre))
        assert {k for k, lb in enumerate(labels) if lb.y == 1} == expected_pos
        for lb, t in zip(labels, rec.scan_times):
            assert (lb.t_d < 0) == (t > b)


def random_censored_sample(rng, max_n=50):
    n = int(rng.integers(1, max_n + 1))
    # draw from a small value grid so ties (event/event and event/censor)
    # actually occur
    times = rng.choice(np.linspace(0.0, 5.0, 11), size=n)
    event = rng.integers(0, 2, size=n)
    return times, event


def random_scores_labels(rng, max_n=200):
    n = int(rng.integers(2, max_n + 1))
    labels = rng.integers(0, 2, size=n)
    if labels.sum() == 0:
        labels[int(rng.integers(0, n))] = 1
    if labels.sum() == n:
        labels[int(rng.integers(0, n))] = 0
    # mixture of continuous scores and a coarse grid to generate ties
    if rng.uniform() < 0.5:
        scores = rng.uniform(0.0, 1.0, size=n)
    else:
        scores = rng.choice(np.linspace(0.0, 1.0, 7), size=n)
    return scores, labels
