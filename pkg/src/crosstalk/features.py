"""Acoustic front-end: framing, MFCC extraction, delta appendages.

The detector consumes 19 cepstral coefficients with first- and second-order
derivatives (57 dimensions); the resegmentation stage consumes 20
coefficients with deltas and double deltas (60 dimensions). Both are
extracted every 10 ms on 25 ms windows.

Fixed conventions (the extraction is fully deterministic):

* 40 triangular mel filters spanning 0 Hz to Nyquist, Hamming window,
  FFT size = next power of two >= window length, no pre-emphasis;
* filterbank log energies floored at 1e-10 before the DCT;
* cepstral coefficient 0 (overall log energy) is included, so ``n_coeff=19``
  returns coefficients 0..18;
* deltas by 5-frame linear regression with edge replication.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "Waveform",
    "FeatureMatrix",
    "frame_signal",
    "mfcc",
    "add_derivatives",
    "detector_features",
    "resegment_features",
    "frame_count",
    "DETECTOR_COEFF",
    "RESEG_COEFF",
    "FRAME_LENGTH",
    "FRAME_STEP",
]

FRAME_LENGTH = 0.025
FRAME_STEP = 0.01
N_MEL_FILTERS = 40
LOG_FLOOR = 1e-10
DETECTOR_COEFF = 19   # -> 57 dims with deltas and double deltas
RESEG_COEFF = 20      # -> 60 dims with deltas and double deltas
_DELTA_HALF_WIDTH = 2  # 5-frame regression window


@dataclass(frozen=True)
class Waveform:
    """Mono audio signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError(f"waveform must be mono (1-D), got shape {samples.shape}")
        if not int(self.sample_rate) > 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if samples.size and not np.all(np.isfinite(samples)):
            raise ValueError("waveform contains non-finite samples")
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def slice(self, onset: float, offset: float) -> "Waveform":
        i = int(round(onset * self.sample_rate))
        j = int(round(offset * self.sample_rate))
        i = max(i, 0)
        j = min(j, self.samples.size)
        return Waveform(self.samples[i:j].copy(), self.sample_rate)


@dataclass(frozen=True)
class FeatureMatrix:
    """T x D matrix of per-frame feature vectors on a uniform frame grid."""

    frames: np.ndarray
    frame_step: float = FRAME_STEP
    frame_length: float = FRAME_LENGTH
    start_time: float = 0.0

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"frames must be 2-D, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("feature matrix contains non-finite entries")
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    def frame_times(self) -> np.ndarray:
        """Start time of each frame; frame i covers samples [i*hop, i*hop + win)."""
        return self.start_time + np.arange(self.n_frames) * self.frame_step


def frame_count(n_samples: int, sample_rate: int,
                frame_length: float = FRAME_LENGTH, frame_step: float = FRAME_STEP) -> int:
    win = int(round(frame_length * sample_rate))
    hop = int(round(frame_step * sample_rate))
    if n_samples < win:
        raise ValueError(f"signal too short: {n_samples} samples < one {win}-sample window")
    if hop <= 0:
        raise ValueError("frame_step too small for this sample rate")
    return 1 + (n_samples - win) // hop


def frame_signal(waveform: Waveform,
                 frame_length: float = FRAME_LENGTH,
                 frame_step: float = FRAME_STEP) -> np.ndarray:
    """Cut a waveform into overlapping frames.

    Returns an array of shape (T, window_samples) where
    ``T = 1 + floor((N - window) / hop)``; trailing samples that do not fill
    a window are dropped. Raises ValueError if the signal is shorter than
    one window.
    """
    rate = waveform.sample_rate
    win = int(round(frame_length * rate))
    hop = int(round(frame_step * rate))
    n = frame_count(waveform.samples.size, rate, frame_length, frame_step)
    idx = np.arange(win)[None, :] + hop * np.arange(n)[:, None]
    return waveform.samples[idx]


@lru_cache(maxsize=8)
def _mel_filterbank(sample_rate: int, n_fft: int, n_filters: int = N_MEL_FILTERS) -> np.ndarray:
    """Triangular mel filterbank, 0 Hz to Nyquist, shape (n_filters, n_fft//2 + 1)."""
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    nyquist = sample_rate / 2.0
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(nyquist), n_filters + 2)
    hz_points = mel_to_hz(mel_points)
    bin_freqs = np.arange(n_fft // 2 + 1) * sample_rate / n_fft

    bank = np.zeros((n_filters, n_fft // 2 + 1))
    for j in range(n_filters):
        left, center, right = hz_points[j], hz_points[j + 1], hz_points[j + 2]
        rising = (bin_freqs - left) / max(center - left, 1e-12)
        falling = (right - bin_freqs) / max(right - center, 1e-12)
        bank[j] = np.clip(np.minimum(rising, falling), 0.0, None)
    return bank


@lru_cache(maxsize=8)
def _dct_matrix(n_coeff: int, n_filters: int) -> np.ndarray:
    """Orthonormal DCT-II matrix rows 0..n_coeff-1, shape (n_coeff, n_filters)."""
    k = np.arange(n_coeff)[:, None]
    m = np.arange(n_filters)[None, :]
    mat = np.sqrt(2.0 / n_filters) * np.cos(np.pi * k * (m + 0.5) / n_filters)
    mat[0] *= np.sqrt(0.5)
    return mat


def mfcc(frames: np.ndarray, n_coeff: int, sample_rate: int,
         frame_step: float = FRAME_STEP, frame_length: float = FRAME_LENGTH,
         start_time: float = 0.0) -> FeatureMatrix:
    """Mel-frequency cepstral coefficients of pre-cut frames.

    Parameters
    ----------
    frames : (T, window_samples) array, as returned by :func:`frame_signal`.
    n_coeff : number of cepstral coefficients to keep (coefficient 0 included).
    sample_rate : sampling rate of the source waveform in Hz.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] == 0:
        raise ValueError("frames must be a non-empty (T, window) array")
    win = frames.shape[1]
    n_fft = 1
    while n_fft < win:
        n_fft *= 2
    windowed = frames * np.hamming(win)
    power = np.abs(np.fft.rfft(windowed, n_fft)) ** 2 / n_fft
    bank = _mel_filterbank(sample_rate, n_fft)
    log_energies = np.log(np.maximum(power @ bank.T, LOG_FLOOR))
    coeffs = log_energies @ _dct_matrix(n_coeff, bank.shape[0]).T
    return FeatureMatrix(coeffs, frame_step=frame_step, frame_length=frame_length,
                         start_time=start_time)


def _delta(frames: np.ndarray, half_width: int = _DELTA_HALF_WIDTH) -> np.ndarray:
    """Linear-regression slope over a (2*half_width + 1)-frame window,
    with edge frames replicated."""
    if frames.shape[0] < half_width + 1:
        raise ValueError(
            f"need at least {half_width + 1} frames for delta regression, got {frames.shape[0]}"
        )
    padded = np.concatenate(
        [np.repeat(frames[:1], half_width, axis=0),
         frames,
         np.repeat(frames[-1:], half_width, axis=0)],
        axis=0,
    )
    norm = 2.0 * sum(n * n for n in range(1, half_width + 1))
    out = np.zeros_like(frames)
    t = half_width
    for n in range(1, half_width + 1):
        out += n * (padded[t + n:t + n + frames.shape[0]] - padded[t - n:t - n + frames.shape[0]])
    return out / norm


def add_derivatives(features: FeatureMatrix, order: int) -> FeatureMatrix:
    """Append delta (order 1) or delta + double-delta (order 2) columns."""
    if order not in (1, 2):
        raise ValueError(f"order must be 1 or 2, got {order}")
    blocks = [features.frames]
    current = features.frames
    for _ in range(order):
        current = _delta(current)
        blocks.append(current)
    return FeatureMatrix(
        np.concatenate(blocks, axis=1),
        frame_step=features.frame_step,
        frame_length=features.frame_length,
        start_time=features.start_time,
    )


def standardize(features: FeatureMatrix) -> FeatureMatrix:
    """Zero-mean, unit-variance scaling of every column over the sequence.

    The labeler is always fed standardized sequences (training chunks and
    inference windows alike); near-constant columns are left centered but
    unscaled to avoid noise blow-up.
    """
    frames = features.frames
    mean = frames.mean(axis=0)
    std = frames.std(axis=0)
    std = np.where(std < 1e-8, 1.0, std)
    return FeatureMatrix(
        (frames - mean) / std,
        frame_step=features.frame_step,
        frame_length=features.frame_length,
        start_time=features.start_time,
    )


def detector_features(waveform: Waveform, start_time: float = 0.0) -> FeatureMatrix:
    """57-dimensional detector features: 19 MFCCs + deltas + double deltas."""
    frames = frame_signal(waveform)
    base = mfcc(frames, DETECTOR_COEFF, waveform.sample_rate, start_time=start_time)
    return add_derivatives(base, order=2)


def resegment_features(waveform: Waveform, start_time: float = 0.0) -> FeatureMatrix:
    """60-dimensional resegmentation features: 20 MFCCs + deltas + double deltas."""
    frames = frame_signal(waveform)
    base = mfcc(frames, RESEG_COEFF, waveform.sample_rate, start_time=start_time)
    return add_derivatives(base, order=2)
