"""Turn speaker posteriors plus an overlap timeline into a diarization
with up to two speakers per frame.

Every voiced frame gets the posterior argmax speaker; frames inside
detected overlap additionally get the runner-up. Ties pick the
lowest-indexed speaker. Overlap claimed outside the voiced regions is
ignored and reported in the diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .reseg import PosteriorMatrix
from .timelines import Annotation, Timeline

__all__ = ["AssignDiagnostics", "AssignResult", "assign_speakers",
           "oracle_assignment", "merge_frames"]


@dataclass(frozen=True)
class AssignDiagnostics:
    """What was dropped on the way to the final annotation."""

    overlap_outside_speech: float
    unlabeled_voiced: float

    def summary(self) -> str:
        return (
            f"overlap outside speech ignored: {self.overlap_outside_speech:.2f}s, "
            f"voiced frames without posterior mass: {self.unlabeled_voiced:.2f}s"
        )


@dataclass(frozen=True)
class AssignResult:
    annotation: Annotation
    diagnostics: AssignDiagnostics


def merge_frames(speaker_ids, masks: np.ndarray, frame_step: float,
                 start_time: float = 0.0, uri: str = "rec") -> Annotation:
    """Per-speaker frame masks -> Annotation; maximal runs of consecutive
    labeled frames become segments."""
    return Annotation.from_masks(speaker_ids, masks, frame_step, start_time, uri)


def assign_speakers(q: PosteriorMatrix, vad: Timeline, overlap: Timeline,
                    uri: str = "rec") -> AssignResult:
    """Build the final two-speakers-max diarization.

    Parameters
    ----------
    q : PosteriorMatrix
        Speaker posteriors per frame.
    vad : Timeline
        Speech regions; frames outside get no speaker.
    overlap : Timeline
        Detected overlap regions; frames inside (and voiced) get a second
        speaker when the posterior has at least two rows.
    uri : str
        Recording id for the output annotation.

    Returns
    -------
    AssignResult
        The annotation plus diagnostics about ignored overlap and voiced
        frames carrying no posterior mass.
    """
    n = q.n_frames
    step = q.frame_step
    start = q.start_time
    voiced = vad.to_mask(n, step, start).astype(bool)
    ovl = overlap.to_mask(n, step, start).astype(bool)
    has_mass = q.q.sum(axis=0) > 0.5
    assignable = voiced & has_mass

    outside = ovl & ~voiced
    orphaned = voiced & ~has_mass
    diagnostics = AssignDiagnostics(
        overlap_outside_speech=float(outside.sum()) * step,
        unlabeled_voiced=float(orphaned.sum()) * step,
    )

    masks = np.zeros((q.n_speakers, n), dtype=bool)
    idx = np.flatnonzero(assignable)
    if idx.size:
        cols = q.q[:, idx]
        primary = cols.argmax(axis=0)
        masks[primary, idx] = True
        if q.n_speakers >= 2:
            two = idx[ovl[idx]]
            if two.size:
                # runner-up: stable descending sort keeps the lowest index
                # on ties
                order = np.argsort(-q.q[:, two], axis=0, kind="stable")
                masks[order[1], two] = True
    annotation = merge_frames(q.speaker_ids, masks, step, start, uri)
    return AssignResult(annotation, diagnostics)


def oracle_assignment(reference: Annotation, vad: Timeline, overlap: Timeline,
                      n_frames: int, frame_step: float, start_time: float = 0.0,
                      uri: str = "rec") -> AssignResult:
    """Assignment ablation with ideal speaker choices.

    Keeps the detected overlap timeline but replaces the posterior-based
    speaker decisions with the reference ones: each voiced frame gets the
    first reference speaker active there, and overlap frames get the first
    two. Useful for separating detector errors from assignment errors.
    """
    speakers = reference.speakers()
    voiced = vad.to_mask(n_frames, frame_step, start_time).astype(bool)
    ovl = overlap.to_mask(n_frames, frame_step, start_time).astype(bool)
    _, ref_masks = reference.to_masks(n_frames, frame_step, start_time, speakers)
    masks = np.zeros_like(ref_masks)
    outside = ovl & ~voiced
    orphaned = np.zeros(n_frames, dtype=bool)
    for t in np.flatnonzero(voiced):
        active = np.flatnonzero(ref_masks[:, t])
        if active.size == 0:
            orphaned[t] = True
            continue
        masks[active[0], t] = True
        if ovl[t] and active.size >= 2:
            masks[active[1], t] = True
    diagnostics = AssignDiagnostics(
        overlap_outside_speech=float(outside.sum()) * frame_step,
        unlabeled_voiced=float(orphaned.sum()) * frame_step,
    )
    return AssignResult(
        merge_frames(speakers, masks, frame_step, start_time, uri), diagnostics
    )
