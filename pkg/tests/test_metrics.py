"""Scoring: detection precision/recall, DER per-instant integration against
a fine-sampled oracle, optimal speaker mapping, threshold tuning,
aggregation, and report formatting."""

import json

import numpy as np
import pytest

from crosstalk.detector import ScoreSequence
from crosstalk.errors import DataError
from crosstalk.metrics import (
    aggregate_der,
    aggregate_detection,
    der,
    der_table,
    detection_table,
    precision_recall,
    reports_to_json,
    speaker_mapping,
    tune_threshold,
)
from crosstalk.timelines import Annotation, Timeline

GRID = 1.0 / 256.0


def test_precision_recall_hand_case():
    ref = Timeline([(0, 4)])
    hyp = Timeline([(2, 8)])
    report = precision_recall(ref, hyp)
    assert report.correct == 2.0
    assert report.precision == pytest.approx(100.0 * 2 / 6)
    assert report.recall == pytest.approx(50.0)
    assert not report.empty_hypothesis


def test_precision_recall_swap_symmetry():
    rng = np.random.default_rng(26)
    for _ in range(30):
        a = Timeline.from_mask(rng.random(50) < 0.4, 0.1)
        b = Timeline.from_mask(rng.random(50) < 0.4, 0.1)
        if not a or not b:
            continue
        ab, ba = precision_recall(a, b), precision_recall(b, a)
        assert ab.precision == pytest.approx(ba.recall)
        assert ab.recall == pytest.approx(ba.precision)


def test_precision_recall_empty_hypothesis_flagged():
    report = precision_recall(Timeline([(0, 1)]), Timeline())
    assert report.precision == 100.0
    assert report.recall == 0.0
    assert report.empty_hypothesis


def test_der_contract_case():
    # ref: A on [0,4] and B on [2,6]; hyp: one speaker covering [0,6].
    # Per-instant counting: on [2,4] two reference speakers face one
    # hypothesis speaker (2 s missed); on [4,6] the mapped speaker is wrong
    # (2 s confusion). 4 s of error against 8 s of reference speech.
    ref = Annotation([(0, 4, "A"), (2, 6, "B")])
    hyp = Annotation([(0, 6, "X")])
    for report in (der(ref, hyp), der(ref, hyp, mapping={"X": "A"})):
        assert report.der == pytest.approx(50.0)
        assert report.false_alarm == 0.0
        assert report.missed_detection == pytest.approx(25.0)
        assert report.confusion == pytest.approx(25.0)
        assert report.reference_seconds == 8.0


def _sampled_errors(reference, hypothesis, mapping, step=1.0 / 1024.0):
    """Fine-sampled per-instant integration; exact on the dyadic grid."""
    points = [t for ann in (reference, hypothesis) for a, b, _ in ann
              for t in (a, b)]
    lo, hi = min(points), max(points)
    times = np.arange(lo + step / 2.0, hi, step)
    ref_speakers = reference.speakers()
    hyp_speakers = hypothesis.speakers()
    ref_active = np.stack([reference.speaker_timeline(s).contains_times(times)
                           for s in ref_speakers])
    hyp_active = np.stack([hypothesis.speaker_timeline(s).contains_times(times)
                           for s in hyp_speakers]) if hyp_speakers else \
        np.zeros((0, times.size), dtype=bool)
    n_ref = ref_active.sum(axis=0)
    n_hyp = hyp_active.sum(axis=0)
    correct = np.zeros(times.size)
    for j, h in enumerate(hyp_speakers):
        target = mapping.get(h)
        if target in ref_speakers:
            correct += hyp_active[j] & ref_active[ref_speakers.index(target)]
    fa = np.maximum(n_hyp - n_ref, 0).sum() * step
    miss = np.maximum(n_ref - n_hyp, 0).sum() * step
    conf = (np.minimum(n_ref, n_hyp) - correct).sum() * step
    return fa, miss, conf


def test_der_matches_fine_sampled_integrator(make_annotation):
    rng = np.random.default_rng(27)
    for _ in range(25):
        ref = make_annotation(rng, n_speakers=3, n_segments=8)
        hyp = make_annotation(rng, n_speakers=3, n_segments=8)
        mapping = speaker_mapping(ref, hyp)
        report = der(ref, hyp, mapping=mapping)
        fa, miss, conf = _sampled_errors(ref, hyp, mapping)
        assert report.false_alarm_seconds == pytest.approx(fa, abs=1e-9)
        assert report.miss_seconds == pytest.approx(miss, abs=1e-9)
        assert report.confusion_seconds == pytest.approx(conf, abs=1e-9)


def test_der_decomposition_identity(make_annotation):
    rng = np.random.default_rng(28)
    for _ in range(50):
        ref = make_annotation(rng, n_speakers=4, n_segments=10)
        hyp = make_annotation(rng, n_speakers=4, n_segments=10)
        r = der(ref, hyp)
        assert r.der == pytest.approx(
            r.false_alarm + r.missed_detection + r.confusion, abs=1e-9)


def test_hungarian_equals_brute_force(make_annotation):
    rng = np.random.default_rng(29)
    for _ in range(50):
        ref = make_annotation(rng, n_speakers=4, n_segments=12)
        hyp = make_annotation(rng, n_speakers=4, n_segments=12)
        assert der(ref, hyp, method="hungarian").der == \
            der(ref, hyp, method="brute").der


def test_der_invariant_to_segment_splitting(make_annotation):
    rng = np.random.default_rng(30)
    for _ in range(20):
        ref = make_annotation(rng, n_speakers=3, n_segments=6)
        hyp = make_annotation(rng, n_speakers=3, n_segments=6)
        entries = list(hyp)
        a, b, speaker = entries[int(rng.integers(len(entries)))]
        cut = (a + b) / 2.0
        entries.remove((a, b, speaker))
        entries += [(a, cut, speaker), (cut, b, speaker)]
        split = Annotation(entries, uri=hyp.uri)
        before, after = der(ref, hyp), der(ref, split)
        assert before.false_alarm_seconds == after.false_alarm_seconds
        assert before.miss_seconds == after.miss_seconds
        assert before.confusion_seconds == after.confusion_seconds


def test_der_empty_hypothesis_is_all_miss():
    ref = Annotation([(0, 4, "A"), (2, 6, "B")])
    report = der(ref, Annotation([]))
    assert report.missed_detection == 100.0
    assert report.der == 100.0
    assert report.false_alarm == 0.0 and report.confusion == 0.0


def test_der_requires_reference_speech():
    with pytest.raises(DataError):
        der(Annotation([]), Annotation([(0, 1, "X")]))


def test_der_collar_hand_case():
    ref = Annotation([(0, 4, "A")])
    hyp = Annotation([(0, 5, "A")])
    report = der(ref, hyp, collar=0.25)
    assert report.reference_seconds == 3.5
    assert report.false_alarm_seconds == 0.75
    assert report.miss_seconds == 0.0
    assert report.confusion_seconds == 0.0
    assert report.der == pytest.approx(100.0 * 0.75 / 3.5)


def test_der_collar_can_empty_the_reference():
    ref = Annotation([(0, 0.4, "A")])
    with pytest.raises(DataError):
        der(ref, Annotation([(0, 0.4, "A")]), collar=0.25)


def test_speaker_mapping_is_one_to_one(make_annotation):
    rng = np.random.default_rng(31)
    for _ in range(20):
        ref = make_annotation(rng, n_speakers=4)
        hyp = make_annotation(rng, n_speakers=5)
        for method in ("hungarian", "brute"):
            mapping = speaker_mapping(ref, hyp, method=method)
            targets = list(mapping.values())
            assert len(set(targets)) == len(targets)
            assert set(mapping) <= set(hyp.speakers())
            assert set(targets) <= set(ref.speakers())
    assert speaker_mapping(Annotation([]), Annotation([(0, 1, "X")])) == {}


def _tune_items():
    scores = np.array([0.9, 0.8, 0.7, 0.6])
    seq = ScoreSequence(np.column_stack([1 - scores, scores]), 0.01)
    ref = Timeline([(0.0, 0.02)])  # frames 0 and 1 are true overlap
    return [(seq, ref)]


def test_tune_threshold_hand_case():
    # precision by threshold: 0.9 -> 100 (nothing kept), 0.8 -> 100,
    # 0.7 -> 100, 0.6 -> 66.7, 0.0 -> 50
    assert tune_threshold(_tune_items(), target_precision=90.0) == 0.7
    assert tune_threshold(_tune_items(), target_precision=60.0) == 0.6
    assert tune_threshold(_tune_items(), target_precision=40.0) == 0.0


def test_tune_threshold_none_without_positives():
    scores = np.array([0.9, 0.1])
    seq = ScoreSequence(np.column_stack([1 - scores, scores]), 0.01)
    assert tune_threshold([(seq, Timeline())]) is None


def test_aggregate_der_pools_seconds():
    ref1 = Annotation([(0, 4, "A"), (2, 6, "B")])
    hyp1 = Annotation([(0, 6, "X")])
    ref2 = Annotation([(0, 8, "A")])
    hyp2 = Annotation([(0, 8, "A")])
    r1, r2 = der(ref1, hyp1), der(ref2, hyp2, mapping={"A": "A"})
    total = aggregate_der([r1, r2])
    assert total.reference_seconds == 16.0
    assert total.miss_seconds == r1.miss_seconds
    assert total.der == pytest.approx(100.0 * 4.0 / 16.0)
    assert total.der == pytest.approx(
        total.false_alarm + total.missed_detection + total.confusion)


def test_aggregate_detection_pools_durations():
    a = precision_recall(Timeline([(0, 4)]), Timeline([(0, 2)]))
    b = precision_recall(Timeline([(0, 2)]), Timeline([(0, 4)]))
    pooled = aggregate_detection([a, b])
    assert pooled.correct == 4.0
    assert pooled.detected == 6.0
    assert pooled.reference == 6.0
    assert pooled.precision == pytest.approx(100.0 * 4 / 6)


def test_report_tables_and_json():
    ref = Annotation([(0, 4, "A"), (2, 6, "B")], uri="u1")
    hyp = Annotation([(0, 6, "X")], uri="u1")
    report = der(ref, hyp)
    table = der_table({"u1": report})
    assert "u1" in table and "50.00" in table
    det = precision_recall(Timeline([(0, 4)]), Timeline([(2, 8)]))
    dtable = detection_table({"u1": det})
    assert "u1" in dtable and "50.00" in dtable
    payload = json.loads(reports_to_json({"u1": report},
                                         aggregate=aggregate_der([report])))
    assert payload["recordings"]["u1"]["der"] == pytest.approx(50.0)
    assert payload["aggregate"]["der"] == pytest.approx(50.0)
