import math
from dataclasses import replace

import numpy as np
import pytest

from sweetdeep import features as F
from sweetdeep.dataset import ND, PD, T2D, InstanceTable
from sweetdeep.ecgproc import detect_r_peaks, bandpass_filter
from sweetdeep.errors import ParameterError
from sweetdeep.signalgen import BeatTemplateParams, CohortSpec, GroundTruth, generate_cohort, synthesize_ecg

CLEAN = replace(BeatTemplateParams(), noise_std=0.0, wander_amplitude=0.0, spike_rate=0.0)


def test_zero_variance_rr_gives_unit_gaps():
    p = replace(CLEAN, hr_mean=60.0, rr_std=0.0)
    fs = 250.0
    rec, truth = synthesize_ecg(p, 10.0, fs, seed=1)
    assert len(truth.beats) in (10, 11)
    gaps = np.diff([b.r_peak for b in truth.beats])
    assert np.all(np.abs(gaps - 1.0) <= 1 / fs)
    detected = detect_r_peaks(bandpass_filter(rec), [])
    assert len(detected) in (10, 11)
    assert np.all(np.abs(np.diff(detected) - 1.0) <= 1 / fs)


@pytest.mark.parametrize("seed", range(5))
def test_no_spikes_without_rate(seed):
    _, truth = synthesize_ecg(BeatTemplateParams(), 30.0, 500.0, seed)
    assert truth.spikes == []


def test_same_seed_is_identical():
    p = replace(BeatTemplateParams(), spike_rate=5.0)
    a, ta = synthesize_ecg(p, 20.0, 500.0, 7)
    b, tb = synthesize_ecg(p, 20.0, 500.0, 7)
    assert np.array_equal(a.samples, b.samples)
    assert ta.to_dict() == tb.to_dict()
    c, _ = synthesize_ecg(p, 20.0, 500.0, 8)
    assert not np.array_equal(a.samples, c.samples)


def test_truth_qtc_equals_qt_base():
    p = replace(BeatTemplateParams(), rr_std=0.08)
    _, truth = synthesize_ecg(p, 60.0, 500.0, 2)
    qtc = [(b.t_offset - b.r_onset) / b.rr_prev ** (1 / 3) for b in truth.beats if b.rr_prev]
    assert np.allclose(qtc, p.qt_base, atol=1e-9)


def test_r_onset_is_zero_crossing_of_q_plus_r():
    p = BeatTemplateParams()
    t = p.r_onset_offset()
    q = p.q.amplitude * math.exp(-0.5 * ((t - p.q.center) / p.q.width) ** 2)
    r = p.r.amplitude * math.exp(-0.5 * (t / p.r.width) ** 2)
    assert abs(q + r) < 1e-9
    assert p.q.center < t < 0


def test_ground_truth_round_trip(tmp_path):
    _, truth = synthesize_ecg(replace(BeatTemplateParams(), spike_rate=6), 30.0, 500.0, 4)
    path = tmp_path / "gt.json"
    truth.save(path)
    assert GroundTruth.load(path).to_dict() == truth.to_dict()


def test_snr_of_default_template_exceeds_20_db():
    _, truth = synthesize_ecg(replace(BeatTemplateParams(), noise_std=0.02), 30.0, 500.0, 0)
    assert truth.snr_db >= 20.0


@pytest.mark.parametrize(
    "change",
    [
        {"hr_mean": 0.0},
        {"spike_rate": 1.0, "spike_amplitude": 2.0},
        {"qt_base": 2.0},
        {"noise_std": -1.0},
    ],
)
def test_invalid_template_rejected(change):
    with pytest.raises(ParameterError):
        synthesize_ecg(replace(BeatTemplateParams(), **change), 10.0, 500.0, 0)


def test_single_patient_cohort():
    spec = CohortSpec(n_nd=1, n_t2d=0, n_pd=0, instances_mean=20, instances_std=0, seed=5)
    recs = generate_cohort(spec)
    assert len(recs) == 20
    assert len({r.patient_id for r in recs}) == 1
    assert len({float(r.features[F.AGE_INDEX]) for r in recs}) == 1
    assert len({tuple(r.features[F.GROUPS["family_history"]]) for r in recs}) == 1
    assert len({r.timestamp for r in recs}) == 20


def test_default_cohort_size(default_records):
    labelled = [r for r in default_records if r.label in (ND, T2D)]
    patients = {r.patient_id for r in labelled}
    assert len(patients) == 285
    assert abs(len(labelled) - 5700) / 5700 < 0.05
    assert len({r.patient_id for r in default_records if r.label == PD}) == 153


def test_time_slice_matches_timestamp(default_records):
    for r in default_records[:200]:
        assert np.allclose(r.features[F.TIME_SLICE], F.encode_time(F.seconds_of_day(r.timestamp)), atol=1e-12)


def test_every_hour_of_day_is_sampled(default_records):
    hours = {int(F.seconds_of_day(r.timestamp) // 3600) for r in default_records}
    assert hours == set(range(24))


def test_zero_separation_gives_indistinguishable_classes():
    recs = generate_cohort(replace(CohortSpec(), separation=0.0, seed=11))
    table = InstanceTable.from_records(recs)
    cols = list(range(23)) + [F.AGE_INDEX]
    means = {}
    for label in (ND, T2D):
        sub = table.with_labels([label])
        ids = sorted(set(sub.patient_ids))
        means[label] = np.array([sub.X[sub.patient_ids == p][:, cols].mean(axis=0) for p in ids])
    a, b = means[ND], means[T2D]
    se = np.sqrt(a.var(axis=0, ddof=1) / len(a) + b.var(axis=0, ddof=1) / len(b))
    z = np.abs(a.mean(axis=0) - b.mean(axis=0)) / se
    assert np.all(z < 3.0), z


def test_default_separation_moves_class_means(default_table):
    nd = default_table.with_labels([ND]).X[:, 0].mean()
    t2d = default_table.with_labels([T2D]).X[:, 0].mean()
    assert t2d > nd  # QTc is longer on average in the T2D class
