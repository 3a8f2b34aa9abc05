"""Whole-recording scoring: slide a fixed window over the feature sequence,
score each window with the labeler, and average the per-frame scores over
every window that covers a frame. Binarization then turns the averaged
overlap scores into a Timeline.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detector import LabelerModel, ScoreSequence, forward_batch
from .features import FeatureMatrix
from .timelines import Timeline

_STD_FLOOR = 1e-8

__all__ = ["SlidingConfig", "slide_scores", "binarize"]


@dataclass(frozen=True)
class SlidingConfig:
    """Sliding-window and binarization settings.

    ``threshold`` is strict: a frame is overlap when its averaged score is
    ``> threshold``. ``min_duration_off`` fills shorter gaps between
    detected regions, then ``min_duration_on`` drops shorter regions, in
    that order.
    """

    window: float = 2.0
    hop: float = 0.5
    threshold: float = 0.5
    min_duration_on: float = 0.0
    min_duration_off: float = 0.0

    def __post_init__(self):
        if self.window <= 0 or not 0 < self.hop <= self.window:
            raise ValueError("need 0 < hop <= window")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("threshold must be in [0, 1]")
        if self.min_duration_on < 0 or self.min_duration_off < 0:
            raise ValueError("minimum durations must be >= 0")


def _standardize_windows(X: np.ndarray) -> np.ndarray:
    # per window, per column; mirrors features.standardize for a batch
    mean = X.mean(axis=1, keepdims=True)
    std = X.std(axis=1, keepdims=True)
    std = np.where(std < _STD_FLOOR, 1.0, std)
    return (X - mean) / std


def slide_scores(model: LabelerModel, features: FeatureMatrix,
                 config: SlidingConfig | None = None,
                 batch_windows: int = 64) -> ScoreSequence:
    """Score every frame of a recording with overlapping windows.

    Parameters
    ----------
    model : LabelerModel
    features : FeatureMatrix
        Full-recording detector features.
    config : SlidingConfig, optional
        Window and hop lengths (seconds).
    batch_windows : int
        How many windows to push through the net at once.

    Returns
    -------
    ScoreSequence
        Per-frame scores, each the mean over all covering windows. A final
        window flush against the end of the sequence guarantees full
        coverage; sequences no longer than one window are scored in a
        single pass. Every window is standardized (per column, over the
        window) before it reaches the net, matching how training chunks
        are prepared.
    """
    config = config or SlidingConfig()
    n = features.n_frames
    if n == 0:
        raise ValueError("empty feature sequence")
    win = max(1, int(round(config.window / features.frame_step)))
    hop = max(1, int(round(config.hop / features.frame_step)))
    if n <= win:
        probs = forward_batch(model, _standardize_windows(features.frames[None]))[0]
        return ScoreSequence(probs, features.frame_step, features.start_time)
    starts = list(range(0, n - win + 1, hop))
    if starts[-1] != n - win:
        starts.append(n - win)
    total = np.zeros((n, 2))
    count = np.zeros(n)
    for lo in range(0, len(starts), batch_windows):
        chunk = starts[lo:lo + batch_windows]
        X = np.stack([features.frames[s:s + win] for s in chunk])
        probs = forward_batch(model, _standardize_windows(X))
        for s, p in zip(chunk, probs):
            total[s:s + win] += p
            count[s:s + win] += 1.0
    scores = total / count[:, None]
    return ScoreSequence(scores, features.frame_step, features.start_time)


def binarize(scores: ScoreSequence, config: SlidingConfig | None = None) -> Timeline:
    """Averaged overlap scores -> detected overlap regions.

    Frames scoring strictly above ``config.threshold`` become detected
    frames; each maximal run of detected frames becomes one region spanning
    those frame cells. Gaps shorter than ``min_duration_off`` are filled,
    then regions shorter than ``min_duration_on`` are removed.
    """
    config = config or SlidingConfig()
    mask = scores.overlap > config.threshold
    timeline = Timeline.from_mask(mask, scores.frame_step, scores.start_time)
    if config.min_duration_off > 0 and len(timeline) > 1:
        filled = []
        cur_on, cur_off = timeline[0]
        for onset, offset in timeline[1:]:
            if onset - cur_off < config.min_duration_off:
                cur_off = offset
            else:
                filled.append((cur_on, cur_off))
                cur_on, cur_off = onset, offset
        filled.append((cur_on, cur_off))
        timeline = Timeline(filled)
    if config.min_duration_on > 0:
        timeline = Timeline(
            [seg for seg in timeline if seg[1] - seg[0] >= config.min_duration_on]
        )
    return timeline
