"""Evaluation: overlap-detection precision/recall and diarization error
rate (DER).

DER follows the usual time-weighted accounting. For every elementary
interval of the time axis with ``Nref`` reference speakers and ``Nhyp``
hypothesis speakers:

- false alarm time += max(0, Nhyp - Nref)
- missed speech time += max(0, Nref - Nhyp)
- speaker confusion time += min(Nref, Nhyp) - Ncorrect

where ``Ncorrect`` counts hypothesis speakers active together with the
reference speaker they are mapped to. The speaker mapping is the one-to-one
map maximizing total co-occurrence duration, found with the Hungarian
algorithm (a brute-force search over permutations is kept as a
cross-check). All rates are percentages of total reference speech time,
counted with multiplicity, and ``der = false_alarm + miss + confusion``
holds exactly. An optional no-score collar removes a window around every
reference segment boundary from scoring.

Reports carry raw second counts so multiple recordings aggregate exactly
(sum seconds, then normalize).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import asdict, dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DataError
from .timelines import Annotation, Timeline, frame_midpoints

__all__ = [
    "DetectionReport",
    "DerReport",
    "precision_recall",
    "speaker_mapping",
    "der",
    "tune_threshold",
    "aggregate_detection",
    "aggregate_der",
    "detection_table",
    "der_table",
    "reports_to_json",
]


@dataclass(frozen=True)
class DetectionReport:
    """Timeline-vs-timeline detection scores, percentages in [0, 100]."""

    precision: float
    recall: float
    correct: float
    detected: float
    reference: float
    empty_hypothesis: bool = False


@dataclass(frozen=True)
class DerReport:
    """Diarization error decomposition; percentages of reference speech."""

    der: float
    false_alarm: float
    missed_detection: float
    confusion: float
    false_alarm_seconds: float
    miss_seconds: float
    confusion_seconds: float
    reference_seconds: float


def precision_recall(reference: Timeline, hypothesis: Timeline) -> DetectionReport:
    """Duration-weighted precision and recall of detected regions.

    An empty hypothesis scores 100% precision (flagged via
    ``empty_hypothesis``) and 0% recall.
    """
    correct = reference.intersection(hypothesis).duration()
    detected = hypothesis.duration()
    ref = reference.duration()
    precision = 100.0 * correct / detected if detected > 0 else 100.0
    recall = 100.0 * correct / ref if ref > 0 else 100.0
    return DetectionReport(
        precision=precision,
        recall=recall,
        correct=correct,
        detected=detected,
        reference=ref,
        empty_hypothesis=detected == 0,
    )


def _speaker_segments(annotation: Annotation, scoring: Timeline | None):
    out = {}
    for speaker in annotation.speakers():
        timeline = annotation.speaker_timeline(speaker)
        if scoring is not None:
            timeline = timeline.intersection(scoring)
        out[speaker] = timeline
    return out


def _scoring_regions(reference: Annotation, hypothesis: Annotation,
                     collar: float) -> Timeline | None:
    if collar <= 0:
        return None
    windows = []
    for onset, offset, _ in reference:
        windows.append((onset - collar, onset + collar))
        windows.append((offset - collar, offset + collar))
    excluded = Timeline(windows)
    points = [t for ann in (reference, hypothesis) for seg in ann
              for t in (seg[0], seg[1])]
    points.extend(t for seg in excluded for t in seg)
    if not points:
        return None
    return excluded.complement(min(points) - 1.0, max(points) + 1.0)


def _elementary_intervals(speaker_timelines):
    edges = sorted({t for tl in speaker_timelines.values()
                    for seg in tl for t in seg})
    return edges


def _active_matrix(speaker_timelines, edges):
    # rows: speakers (iteration order), cols: elementary intervals
    speakers = list(speaker_timelines)
    mids = (np.asarray(edges[:-1]) + np.asarray(edges[1:])) / 2.0
    active = np.zeros((len(speakers), mids.size), dtype=bool)
    for i, speaker in enumerate(speakers):
        active[i] = speaker_timelines[speaker].contains_times(mids)
    return speakers, active


def _cooccurrence(ref_segments, hyp_segments):
    ref_speakers = list(ref_segments)
    hyp_speakers = list(hyp_segments)
    matrix = np.zeros((len(ref_speakers), len(hyp_speakers)))
    for i, r in enumerate(ref_speakers):
        for j, h in enumerate(hyp_speakers):
            matrix[i, j] = ref_segments[r].intersection(hyp_segments[h]).duration()
    return ref_speakers, hyp_speakers, matrix


def speaker_mapping(reference: Annotation, hypothesis: Annotation,
                    method: str = "hungarian") -> dict:
    """One-to-one hypothesis-to-reference speaker map maximizing
    co-occurrence time.

    ``method`` is ``"hungarian"`` (scipy assignment) or ``"brute"``
    (exhaustive search over permutations, for cross-checking); both reach
    the same total co-occurrence.
    """
    ref_segments = _speaker_segments(reference, None)
    hyp_segments = _speaker_segments(hypothesis, None)
    return _mapping_from_matrix(
        *_cooccurrence(ref_segments, hyp_segments), method=method
    )


def _mapping_from_matrix(ref_speakers, hyp_speakers, matrix, method):
    if not ref_speakers or not hyp_speakers:
        return {}
    if method == "hungarian":
        rows, cols = linear_sum_assignment(-matrix)
        return {hyp_speakers[j]: ref_speakers[i] for i, j in zip(rows, cols)}
    if method == "brute":
        n_ref, n_hyp = matrix.shape
        best = None
        best_score = -1.0
        if n_ref <= n_hyp:
            for perm in itertools.permutations(range(n_hyp), n_ref):
                score = sum(matrix[i, j] for i, j in enumerate(perm))
                if score > best_score:
                    best_score = score
                    best = {hyp_speakers[j]: ref_speakers[i]
                            for i, j in enumerate(perm)}
        else:
            for perm in itertools.permutations(range(n_ref), n_hyp):
                score = sum(matrix[i, j] for j, i in enumerate(perm))
                if score > best_score:
                    best_score = score
                    best = {hyp_speakers[j]: ref_speakers[i]
                            for j, i in enumerate(perm)}
        return best
    raise ValueError(f"unknown mapping method {method!r}")


def der(reference: Annotation, hypothesis: Annotation, collar: float = 0.0,
        mapping: dict | None = None, method: str = "hungarian") -> DerReport:
    """Diarization error rate of ``hypothesis`` against ``reference``.

    Parameters
    ----------
    reference, hypothesis : Annotation
    collar : float
        No-score half-width (seconds) around reference segment boundaries.
    mapping : dict, optional
        Fixed hypothesis-to-reference speaker map; computed optimally when
        omitted.
    method : str
        Mapping search when ``mapping`` is None ("hungarian" or "brute").

    Raises
    ------
    DataError
        If the reference contains no scored speech (DER undefined).
    """
    scoring = _scoring_regions(reference, hypothesis, collar)
    ref_segments = _speaker_segments(reference, scoring)
    hyp_segments = _speaker_segments(hypothesis, scoring)
    ref_seconds = sum(tl.duration() for tl in ref_segments.values())
    if ref_seconds <= 0:
        raise DataError("reference has no scored speech; DER is undefined")
    if mapping is None:
        mapping = _mapping_from_matrix(
            *_cooccurrence(ref_segments, hyp_segments), method=method
        )

    merged = {("ref", s): tl for s, tl in ref_segments.items()}
    merged.update({("hyp", s): tl for s, tl in hyp_segments.items()})
    edges = _elementary_intervals(merged)
    fa = miss = conf = 0.0
    if len(edges) >= 2:
        keys, active = _active_matrix(merged, edges)
        durations = np.diff(np.asarray(edges))
        ref_rows = [i for i, key in enumerate(keys) if key[0] == "ref"]
        hyp_rows = [i for i, key in enumerate(keys) if key[0] == "hyp"]
        ref_index = {keys[i][1]: k for k, i in enumerate(ref_rows)}
        n_ref = active[ref_rows].sum(axis=0)
        n_hyp = active[hyp_rows].sum(axis=0)
        correct = np.zeros(durations.size)
        for i in hyp_rows:
            target = mapping.get(keys[i][1])
            if target is None or target not in ref_index:
                continue
            r = ref_rows[ref_index[target]]
            correct += active[i] & active[r]
        fa = float((np.maximum(n_hyp - n_ref, 0) * durations).sum())
        miss = float((np.maximum(n_ref - n_hyp, 0) * durations).sum())
        conf = float(((np.minimum(n_ref, n_hyp) - correct) * durations).sum())
    return DerReport(
        der=100.0 * (fa + miss + conf) / ref_seconds,
        false_alarm=100.0 * fa / ref_seconds,
        missed_detection=100.0 * miss / ref_seconds,
        confusion=100.0 * conf / ref_seconds,
        false_alarm_seconds=fa,
        miss_seconds=miss,
        confusion_seconds=conf,
        reference_seconds=ref_seconds,
    )


def tune_threshold(dev_items, target_precision: float = 90.0) -> float | None:
    """Smallest binarization threshold reaching a target dev-set precision.

    Parameters
    ----------
    dev_items : list of (ScoreSequence, Timeline)
        Per-recording averaged scores and reference overlap regions.
    target_precision : float
        Required frame precision, percent.

    Returns
    -------
    float or None
        The smallest score value t such that predicting overlap on frames
        scoring strictly above t reaches the target precision on the pooled
        dev frames; None when the reference contains no overlap frames at
        all (precision is then meaningless).
    """
    scores = []
    labels = []
    for seq, ref in dev_items:
        mids = frame_midpoints(len(seq), seq.frame_step, seq.start_time)
        scores.append(seq.overlap)
        labels.append(ref.contains_times(mids))
    scores = np.concatenate(scores) if scores else np.empty(0)
    labels = np.concatenate(labels) if labels else np.empty(0, dtype=bool)
    if labels.sum() == 0:
        return None
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    cum_tp = np.cumsum(labels[order])
    # candidate thresholds are the distinct score values; threshold == v
    # keeps exactly the frames scoring strictly above v
    distinct = np.flatnonzero(np.diff(sorted_scores) != 0)
    group_start = np.concatenate(([0], distinct + 1))
    values = sorted_scores[group_start]
    n_det = group_start.astype(np.int64)
    if values[-1] > 0.0:
        # also consider keeping every frame (scores are strictly positive)
        values = np.concatenate([values, [0.0]])
        n_det = np.concatenate([n_det, [scores.size]])
    precision = np.full(values.size, 100.0)
    nonzero = n_det > 0
    precision[nonzero] = 100.0 * cum_tp[n_det[nonzero] - 1] / n_det[nonzero]
    qualifying = precision >= target_precision
    if not qualifying.any():
        # every candidate fails; the largest score still qualifies
        # trivially (no detections), so this cannot happen, but guard it
        return None
    return float(values[qualifying].min())


def aggregate_detection(reports) -> DetectionReport:
    """Pool per-recording detection reports by summing durations."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    correct = sum(r.correct for r in reports)
    detected = sum(r.detected for r in reports)
    reference = sum(r.reference for r in reports)
    return DetectionReport(
        precision=100.0 * correct / detected if detected > 0 else 100.0,
        recall=100.0 * correct / reference if reference > 0 else 100.0,
        correct=correct,
        detected=detected,
        reference=reference,
        empty_hypothesis=detected == 0,
    )


def aggregate_der(reports) -> DerReport:
    """Pool per-recording DER reports by summing error seconds."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    fa = sum(r.false_alarm_seconds for r in reports)
    miss = sum(r.miss_seconds for r in reports)
    conf = sum(r.confusion_seconds for r in reports)
    ref = sum(r.reference_seconds for r in reports)
    if ref <= 0:
        raise DataError("aggregated reference has no speech")
    return DerReport(
        der=100.0 * (fa + miss + conf) / ref,
        false_alarm=100.0 * fa / ref,
        missed_detection=100.0 * miss / ref,
        confusion=100.0 * conf / ref,
        false_alarm_seconds=fa,
        miss_seconds=miss,
        confusion_seconds=conf,
        reference_seconds=ref,
    )


def der_table(rows) -> str:
    """Aligned text table for ``{name: DerReport}``."""
    header = f"{'recording':<24}{'DER%':>8}{'FA%':>8}{'Miss%':>8}{'Conf%':>8}"
    lines = [header, "-" * len(header)]
    for name, report in rows.items():
        lines.append(
            f"{name:<24}{report.der:>8.2f}{report.false_alarm:>8.2f}"
            f"{report.missed_detection:>8.2f}{report.confusion:>8.2f}"
        )
    return "\n".join(lines)


def detection_table(rows) -> str:
    """Aligned text table for ``{name: DetectionReport}``."""
    header = f"{'recording':<24}{'Prec%':>8}{'Rec%':>8}{'Ref s':>10}{'Det s':>10}"
    lines = [header, "-" * len(header)]
    for name, report in rows.items():
        lines.append(
            f"{name:<24}{report.precision:>8.2f}{report.recall:>8.2f}"
            f"{report.reference:>10.2f}{report.detected:>10.2f}"
        )
    return "\n".join(lines)


def reports_to_json(rows, aggregate=None) -> str:
    """Machine-readable report dump: per-recording records plus an
    optional aggregate, as a JSON object."""
    payload = {"recordings": {name: asdict(r) for name, r in rows.items()}}
    if aggregate is not None:
        payload["aggregate"] = asdict(aggregate)
    return json.dumps(payload, indent=2, sort_keys=True)
