"""Synthetic censored screening cohorts with a learnable time-to-event signal.

Each patient gets a standard-normal baseline feature vector ``x``, a latent
risk score ``r = w . x`` (fixed unit ``w``), and a latent onset time drawn
from a Weibull whose scale shrinks exponentially with risk. Scans run on a
regular schedule from time 0 up to the study horizon, cut short by a
per-scan dropout (loss to follow-up). The patient is diagnosed at the
first scan at or after onset when one exists in the realized schedule;
otherwise the onset is right-censored past their follow-up and the patient
is recorded as non-cancer.

Per-scan model features are ``x`` plus one progression channel: a noisy
clipped ramp ``gain * max(0, 1 - (onset - scan_time)/horizon)`` that rises
as the scan approaches onset (and stays at pure noise when onset lies far
beyond the schedule). This channel is what makes the defined CFPT
learnable. True onset times are returned in a separate table for
evaluation only and must never be fed to training.

Aggregate shape targets (cohort size, roughly one quarter of patients
ultimately diagnosed, a few scans per patient a year apart) mimic a real
annual-screening cohort; all finer structure is invented.
"""

from dataclasses import dataclass

import numpy as np

from .labels import PatientRecord, derive_scan_labels


@dataclass(frozen=True)
class CohortConfig:
    n_patients: int = 1500
    cancer_fraction_target: float = 0.26
    feature_dim: int = 8
    scan_interval: float = 1.0
    study_horizon: float = 6.0
    dropout_prob: float = 0.1
    onset_scale: float = 10.464
    onset_shape: float = 1.5
    risk_coeff: float = 0.5
    progression_gain: float = 2.0
    noise_sd: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.n_patients < 1:
            raise ValueError(f"n_patients must be >= 1, got {self.n_patients}")
        if not 0 < self.cancer_fraction_target < 1:
            raise ValueError(
                f"cancer_fraction_target must lie in (0, 1), got {self.cancer_fraction_target}"
            )
        if self.feature_dim < 1:
            raise ValueError(f"feature_dim must be >= 1, got {self.feature_dim}")
        if not self.scan_interval > 0:
            raise ValueError(f"scan_interval must be positive, got {self.scan_interval}")
        if self.study_horizon < self.scan_interval:
            raise ValueError("study_horizon must be at least one scan_interval")
        if not 0 <= self.dropout_prob < 1:
            raise ValueError(f"dropout_prob must lie in [0, 1), got {self.dropout_prob}")
        if not self.onset_scale > 0 or not self.onset_shape > 0:
            raise ValueError("Weibull onset parameters must be positive")
        if self.noise_sd < 0:
            raise ValueError(f"noise_sd must be >= 0, got {self.noise_sd}")


@dataclass(frozen=True)
class CohortSummary:
    n_patients: int
    n_scans: int
    n_cancer_patients: int
    n_malignant_scans: int
    censored_fraction: float
    scans_per_patient: dict

    @property
    def cancer_fraction(self) -> float:
        return self.n_cancer_patients / self.n_patients


def _risk_direction(dim: int) -> np.ndarray:
    return np.ones(dim) / np.sqrt(dim)


def generate_cohort(cfg: CohortConfig):
    """Draw one cohort; returns (records, features, onsets).

    ``records`` is a list of :class:`PatientRecord`, ``features`` maps
    scan_id to its feature vector (baseline ``x`` plus the progression
    channel, so ``feature_dim + 1`` entries), and ``onsets`` maps
    patient_id to the latent onset time (ground truth, evaluation only).
    Output is a pure function of the config, including its seed.
    """
    rng = np.random.default_rng(cfg.seed)
    w = _risk_direction(cfg.feature_dim)
    n_max = int(np.floor(cfg.study_horizon / cfg.scan_interval + 1e-9)) + 1
    width = len(str(cfg.n_patients - 1))

    records = []
    features = {}
    onsets = {}
    for i in range(cfg.n_patients):
        pid = f"p{i:0{width}d}"
        x = rng.standard_normal(cfg.feature_dim)
        r = float(w @ x)
        scale = cfg.onset_scale * np.exp(-cfg.risk_coeff * r)
        t_onset = float(rng.weibull(cfg.onset_shape) * scale)

        scan_times = []
        for k in range(n_max):
            scan_times.append(k * cfg.scan_interval)
            if k < n_max - 1 and rng.uniform() < cfg.dropout_prob:
                break

        diagnosis = None
        for t in scan_times:
            if t >= t_onset:
                diagnosis = t
                break

        noise = rng.normal(0.0, cfg.noise_sd, size=len(scan_times))
        scan_ids = tuple(f"{pid}-s{k}" for k in range(len(scan_times)))
        for k, (sid, t) in enumerate(zip(scan_ids, scan_times)):
            ramp = max(0.0, 1.0 - (t_onset - t) / cfg.study_horizon)
            channel = cfg.progression_gain * ramp + noise[k]
            features[sid] = np.concatenate([x, [channel]])

        records.append(
            PatientRecord(
                patient_id=pid,
                scan_times=tuple(scan_times),
                is_cancer=diagnosis is not None,
                diagnosis_time=diagnosis,
                scan_ids=scan_ids,
            )
        )
        onsets[pid] = t_onset
    return records, features, onsets


def cohort_summary(records) -> CohortSummary:
    """Aggregate counts over a cohort; malignancy via label derivation."""
    if not records:
        raise ValueError("cohort_summary of an empty cohort is undefined")
    n_scans = 0
    n_cancer = 0
    n_malignant = 0
    per_patient = {}
    for rec in records:
        k = len(rec.scan_times)
        n_scans += k
        per_patient[k] = per_patient.get(k, 0) + 1
        if rec.is_cancer:
            n_cancer += 1
        n_malignant += sum(lb.y for lb in derive_scan_labels(rec))
    return CohortSummary(
        n_patients=len(records),
        n_scans=n_scans,
        n_cancer_patients=n_cancer,
        n_malignant_scans=n_malignant,
        censored_fraction=(len(records) - n_cancer) / len(records),
        scans_per_patient=dict(sorted(per_patient.items())),
    )


def calibrate_onset_scale(
    cfg: CohortConfig,
    lo: float = 0.5,
    hi: float = 200.0,
    iterations: int = 40,
) -> float:
    """Bisect ``onset_scale`` until the realized cancer fraction matches
    the config's target (larger scale pushes onsets later, so the fraction
    is monotone decreasing in the scale)."""
    from dataclasses import replace

    def fraction(scale: float) -> float:
        records, _, _ = generate_cohort(replace(cfg, onset_scale=scale))
        return cohort_summary(records).cancer_fraction

    target = cfg.cancer_fraction_target
    if fraction(lo) < target or fraction(hi) > target:
        raise ValueError("calibration target not bracketed by [lo, hi]")
    for _ in range(iterations):
        mid = np.sqrt(lo * hi)  # bisect in log space
        if fraction(mid) > target:
            lo = mid
        else:
            hi = mid
    return float(np.sqrt(lo * hi))


# Frozen reference cohort: the scale below was calibrated by bisection so
# the default config hits the 0.26 target cancer fraction; seeds 0-4 form
# the reference seed family used in the acceptance suite.
REFERENCE_ONSET_SCALE = 10.464


def reference_cohort_config(seed: int = 0) -> CohortConfig:
    """The frozen reference cohort configuration (vary only the seed)."""
    return CohortConfig(
        n_patients=1500,
        cancer_fraction_target=0.26,
        feature_dim=8,
        scan_interval=1.0,
        study_horizon=6.0,
        dropout_prob=0.1,
        onset_scale=REFERENCE_ONSET_SCALE,
        onset_shape=1.5,
        risk_coeff=0.5,
        progression_gain=2.0,
        noise_sd=0.5,
        seed=seed,
    )
