import numpy as np
import pytest

from cfpt.labels import (
    PatientRecord,
    derive_scan_labels,
    effective_biopsy_time,
    validate_record,
)
from helpers import check_label_invariants, random_patient_record


def test_biopsy_time_passthrough():
    rec = PatientRecord("a", (0.0, 1.0, 2.0), True, diagnosis_time=1.7)
    assert effective_biopsy_time(rec) == 1.7


def test_biopsy_time_falls_back_to_last_scan():
    rec = PatientRecord("a", (0.0, 1.0, 2.0), True)
    assert effective_biopsy_time(rec) == 2.0


def test_biopsy_time_single_scan():
    rec = PatientRecord("a", (0.5,), True)
    assert effective_biopsy_time(rec) == 0.5


def test_biopsy_time_rejects_noncancer():
    rec = PatientRecord("a", (0.0, 1.0), False)
    with pytest.raises(ValueError):
        effective_biopsy_time(rec)


def test_noncancer_labels():
    rec = PatientRecord("a", (0.0, 1.0, 2.0), False)
    labels = derive_scan_labels(rec)
    assert [lb.t_d for lb in labels] == [3.0, 2.0, 1.0]
    assert [lb.p for lb in labels] == [0, 0, 0]
    assert [lb.y for lb in labels] == [0, 0, 0]
    assert all(lb.right_censored for lb in labels)


def test_cancer_labels_diagnosis_after_last_scan():
    rec = PatientRecord("a", (0.0, 1.5), True, diagnosis_time=2.0)
    labels = derive_scan_labels(rec)
    assert [lb.t_d for lb in labels] == [2.0, 0.5]
    assert [lb.y for lb in labels] == [0, 1]
    assert not any(lb.right_censored for lb in labels)


def test_cancer_labels_with_post_diagnosis_scan():
    rec = PatientRecord("a", (0.0, 1.0, 3.0), True, diagnosis_time=2.0)
    labels = derive_scan_labels(rec)
    assert [lb.t_d for lb in labels] == [2.0, 1.0, -1.0]
    assert [lb.y for lb in labels] == [0, 1, 1]


def test_cancer_labels_missing_diagnosis_uses_last_scan():
    rec = PatientRecord("a", (0.0, 1.0), True)
    labels = derive_scan_labels(rec)
    assert [lb.t_d for lb in labels] == [1.0, 0.0]
    assert [lb.y for lb in labels] == [0, 1]


def test_scan_exactly_at_biopsy_time_is_malignant():
    rec = PatientRecord("a", (0.0, 2.0), True, diagnosis_time=2.0)
    labels = derive_scan_labels(rec)
    assert [lb.y for lb in labels] == [0, 1]
    assert labels[1].t_d == 0.0


def test_all_scans_after_diagnosis_all_malignant():
    rec = PatientRecord("a", (1.0, 2.0), True, diagnosis_time=0.5)
    labels = derive_scan_labels(rec)
    assert [lb.y for lb in labels] == [1, 1]
    assert all(lb.t_d < 0 for lb in labels)


def test_explicit_scan_ids_are_kept():
    rec = PatientRecord("a", (0.0, 1.0), False, scan_ids=("x1", "x2"))
    labels = derive_scan_labels(rec)
    assert [lb.scan_id for lb in labels] == ["x1", "x2"]


def test_generated_scan_ids_are_unique_and_ordered():
    rec = PatientRecord("pt", (0.0, 1.0, 2.0), False)
    ids = [lb.scan_id for lb in derive_scan_labels(rec)]
    assert len(set(ids)) == 3
    assert ids == sorted(ids)


def test_validate_record_accepts_valid():
    rec = PatientRecord("a", (0.0, 1.0), True, diagnosis_time=0.5)
    assert validate_record(rec) == []


def test_validate_record_flags_unsorted():
    rec = PatientRecord("a", (1.0, 0.0), False)
    assert any("strictly increasing" in v for v in validate_record(rec))


def test_validate_record_flags_duplicate_times():
    rec = PatientRecord("a", (1.0, 1.0), False)
    assert any("strictly increasing" in v for v in validate_record(rec))


def test_validate_record_flags_diagnosis_on_noncancer():
    rec = PatientRecord("a", (0.0, 1.0), False, diagnosis_time=2.0)
    assert any("diagnosis_time" in v for v in validate_record(rec))


def test_validate_record_flags_empty():
    rec = PatientRecord("a", (), False)
    assert any("empty" in v for v in validate_record(rec))


def test_derive_rejects_invalid_record():
    with pytest.raises(ValueError):
        derive_scan_labels(PatientRecord("a", (1.0, 0.0), False))
    with pytest.raises(ValueError):
        derive_scan_labels(PatientRecord("a", (), False))


def test_random_records_satisfy_invariants():
    rng = np.random.default_rng(7)
    for _ in range(300):
        rec = random_patient_record(rng)
        labels = derive_scan_labels(rec)
        check_label_invariants(rec, labels)
        assert derive_scan_labels(rec) == labels  # idempotent
