"""Frame-level refinement of a diarization: per-speaker diagonal-Gaussian
emission models re-estimated from soft assignments, smoothed by an HMM with
a sticky self-loop.

The state posterior matrix Q has one row per speaker and one column per
frame. Unvoiced columns (outside the speech regions) are all-zero and are
never touched; voiced columns are probability distributions over speakers.
One iteration re-fits the Gaussians from Q (M-step) and replaces Q on the
voiced frames with forward-backward posteriors of the smoothing chain
(E-step). The chain runs over the voiced frames as a contiguous
subsequence, with a uniform initial distribution, self-loop probability
``loop_probability`` and the remaining mass spread evenly over the other
speakers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DataError
from .features import FeatureMatrix
from .timelines import Annotation, Timeline

__all__ = ["ResegConfig", "PosteriorMatrix", "init_q", "resegment"]

_COLUMN_TOL = 1e-6


@dataclass(frozen=True)
class ResegConfig:
    loop_probability: float = 0.95
    n_iterations: int = 1
    variance_floor: float = 1e-3

    def __post_init__(self):
        if not 0.0 < self.loop_probability < 1.0:
            raise ValueError("loop_probability must be inside (0, 1)")
        if self.n_iterations < 0:
            raise ValueError("n_iterations must be >= 0")
        if self.variance_floor <= 0:
            raise ValueError("variance_floor must be positive")


@dataclass(frozen=True)
class PosteriorMatrix:
    """Speaker posteriors per frame: rows are speakers, columns frames.

    Every column sums to 1 (voiced) or 0 (unvoiced); entries lie in
    [0, 1].
    """

    q: np.ndarray
    speaker_ids: tuple
    frame_step: float
    start_time: float = 0.0

    def __post_init__(self):
        q = np.ascontiguousarray(self.q, dtype=np.float64)
        if q.ndim != 2:
            raise ValueError("q must be (n_speakers, n_frames)")
        if q.shape[0] != len(self.speaker_ids):
            raise ValueError("row count does not match speaker_ids")
        if len(set(self.speaker_ids)) != len(self.speaker_ids):
            raise ValueError("duplicate speaker ids")
        if q.size:
            if q.min() < -_COLUMN_TOL or q.max() > 1.0 + _COLUMN_TOL:
                raise ValueError("posteriors must lie in [0, 1]")
            sums = q.sum(axis=0)
            bad = (np.abs(sums) > _COLUMN_TOL) & (np.abs(sums - 1.0) > _COLUMN_TOL)
            if bad.any():
                raise ValueError(
                    f"{int(bad.sum())} columns sum to neither 0 nor 1"
                )
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "speaker_ids", tuple(self.speaker_ids))

    @property
    def n_speakers(self) -> int:
        return self.q.shape[0]

    @property
    def n_frames(self) -> int:
        return self.q.shape[1]

    @property
    def voiced_mask(self) -> np.ndarray:
        return self.q.sum(axis=0) > 0.5


def init_q(baseline: Annotation, vad: Timeline, n_frames: int,
           frame_step: float, start_time: float = 0.0) -> PosteriorMatrix:
    """One-hot posteriors from an existing diarization.

    Each voiced frame gets probability 1 on the speaker the baseline puts
    there (the lowest-indexed active speaker if it claims several). Voiced
    frames the baseline leaves unlabeled borrow the speaker of the nearest
    labeled frame (earlier frame on ties). Unvoiced frames are all-zero.

    Raises
    ------
    DataError
        If the baseline names no speakers.
    """
    speakers = baseline.speakers()
    if not speakers:
        raise DataError("baseline diarization has no speakers")
    voiced = vad.to_mask(n_frames, frame_step, start_time).astype(bool)
    _, masks = baseline.to_masks(n_frames, frame_step, start_time, speakers)
    has_label = masks.any(axis=0)
    first = masks.argmax(axis=0)
    q = np.zeros((len(speakers), n_frames))
    labeled = np.flatnonzero(has_label)
    if labeled.size == 0:
        q[0, voiced] = 1.0
        return PosteriorMatrix(q, tuple(speakers), frame_step, start_time)
    orphan = np.flatnonzero(voiced & ~has_label)
    if orphan.size:
        pos = np.searchsorted(labeled, orphan)
        left = labeled[np.clip(pos - 1, 0, labeled.size - 1)]
        right = labeled[np.clip(pos, 0, labeled.size - 1)]
        use_left = (orphan - left) <= (right - orphan)
        use_left |= pos == labeled.size
        use_left &= pos > 0
        nearest = np.where(use_left, left, right)
        first = first.copy()
        first[orphan] = first[nearest]
        has_label = has_label.copy()
        has_label[orphan] = True
    keep = voiced & has_label
    q[first[keep], np.flatnonzero(keep)] = 1.0
    return PosteriorMatrix(q, tuple(speakers), frame_step, start_time)


def _fit_gaussians(x, weights, variance_floor):
    # x: (T, D) voiced frames; weights: (S, T) posteriors
    totals = weights.sum(axis=1)
    global_mean = x.mean(axis=0)
    global_var = x.var(axis=0)
    floor = np.maximum(variance_floor * global_var, 1e-12)
    S = weights.shape[0]
    D = x.shape[1]
    means = np.empty((S, D))
    variances = np.empty((S, D))
    for s in range(S):
        if totals[s] <= 1e-12:
            means[s] = global_mean
            variances[s] = global_var
        else:
            means[s] = weights[s] @ x / totals[s]
            variances[s] = weights[s] @ (x * x) / totals[s] - means[s] ** 2
        variances[s] = np.maximum(variances[s], floor)
    return means, variances


def _log_likelihoods(x, means, variances):
    S = means.shape[0]
    T = x.shape[0]
    loglik = np.empty((T, S))
    for s in range(S):
        diff = x - means[s]
        loglik[:, s] = -0.5 * (
            np.sum(np.log(2.0 * np.pi * variances[s]))
            + np.sum(diff * diff / variances[s], axis=1)
        )
    return loglik


def resegment(features: FeatureMatrix, q0: PosteriorMatrix,
              config: ResegConfig | None = None) -> PosteriorMatrix:
    """Refine speaker posteriors with EM over Gaussian emissions and a
    sticky HMM.

    Parameters
    ----------
    features : FeatureMatrix
        Per-frame acoustic features aligned with ``q0`` (typically the
        60-dimensional cepstral front-end).
    q0 : PosteriorMatrix
        Initial posteriors; its zero columns define the unvoiced frames.
    config : ResegConfig, optional
        ``n_iterations == 0`` returns ``q0`` unchanged; a single-speaker
        matrix is also returned as is.

    Returns
    -------
    PosteriorMatrix
        Same shape, speakers and grid as ``q0``; unvoiced columns stay
        zero.
    """
    config = config or ResegConfig()
    if features.n_frames != q0.n_frames:
        raise ValueError(
            f"features have {features.n_frames} frames, q has {q0.n_frames}"
        )
    if abs(features.frame_step - q0.frame_step) > 1e-9:
        raise ValueError("feature and posterior frame steps differ")
    q = q0.q.copy()
    if config.n_iterations == 0 or q0.n_speakers == 1:
        return PosteriorMatrix(q, q0.speaker_ids, q0.frame_step, q0.start_time)
    voiced = q0.voiced_mask
    if not voiced.any():
        return PosteriorMatrix(q, q0.speaker_ids, q0.frame_step, q0.start_time)
    x = features.frames[voiced]
    for _ in range(config.n_iterations):
        means, variances = _fit_gaussians(x, q[:, voiced], config.variance_floor)
        loglik = _log_likelihoods(x, means, variances)
        gamma, _ = kernels.hmm_forward_backward(loglik, config.loop_probability)
        q[:, voiced] = gamma.T
    return PosteriorMatrix(q, q0.speaker_ids, q0.frame_step, q0.start_time)
