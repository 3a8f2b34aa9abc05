"""Acoustic front-end: framing arithmetic, MFCC values against an
independently coded reference, delta regression, standardization."""

import numpy as np
import pytest
import scipy.fft

from crosstalk.features import (
    FeatureMatrix,
    Waveform,
    add_derivatives,
    detector_features,
    frame_count,
    frame_signal,
    mfcc,
    resegment_features,
    standardize,
)


def test_frame_count_matches_naive_enumeration():
    # oracle: count the windows by explicit enumeration
    rng = np.random.default_rng(0)
    win, hop = 400, 160
    for _ in range(1000):
        n = int(rng.integers(win, 50_000))
        naive, start = 0, 0
        while start + win <= n:
            naive += 1
            start += hop
        assert frame_count(n, 16000) == naive


def test_frame_count_short_signal_raises():
    with pytest.raises(ValueError):
        frame_count(399, 16000)


def test_frame_signal_time_alignment():
    rng = np.random.default_rng(1)
    wave = Waveform(rng.standard_normal(4000), 16000)
    frames = frame_signal(wave)
    assert frames.shape == (frame_count(4000, 16000), 400)
    for i in (0, 5, frames.shape[0] - 1):
        assert np.array_equal(frames[i], wave.samples[i * 160:i * 160 + 400])


def _reference_mfcc(samples: np.ndarray, rate: int, n_coeff: int) -> np.ndarray:
    """Straight-line reference implementation of the documented front-end."""
    win = int(round(0.025 * rate))
    hop = int(round(0.01 * rate))
    n_fft = int(2 ** np.ceil(np.log2(win)))
    top_mel = 2595.0 * np.log10(1.0 + (rate / 2.0) / 700.0)
    edges_hz = 700.0 * (10.0 ** (np.linspace(0.0, top_mel, 42) / 2595.0) - 1.0)
    freqs = np.fft.rfftfreq(n_fft, d=1.0 / rate)
    window = np.hamming(win)
    out, t = [], 0
    while t + win <= samples.size:
        spectrum = np.abs(np.fft.rfft(samples[t:t + win] * window, n_fft)) ** 2 / n_fft
        energies = np.empty(40)
        for j in range(40):
            lo, mid, hi = edges_hz[j:j + 3]
            weights = np.interp(freqs, [lo, mid, hi], [0.0, 1.0, 0.0],
                                left=0.0, right=0.0)
            energies[j] = weights @ spectrum
        ceps = scipy.fft.dct(np.log(np.maximum(energies, 1e-10)),
                             type=2, norm="ortho")
        out.append(ceps[:n_coeff])
        t += hop
    return np.array(out)


@pytest.mark.parametrize("rate", [16000, 8000])
def test_mfcc_matches_reference_implementation(rate):
    rng = np.random.default_rng(42)
    wave = Waveform(0.1 * rng.standard_normal(int(0.12 * rate)), rate)
    got = mfcc(frame_signal(wave), 19, rate).frames
    want = _reference_mfcc(wave.samples, rate, 19)
    assert got.shape == want.shape
    assert np.allclose(got, want, rtol=1e-9, atol=1e-9)


def test_mfcc_finite_on_silence():
    wave = Waveform(np.zeros(8000), 16000)
    feats = detector_features(wave)
    assert np.all(np.isfinite(feats.frames))


def test_mfcc_rejects_empty_frames():
    with pytest.raises(ValueError):
        mfcc(np.empty((0, 400)), 19, 16000)


def test_feature_shapes_and_frame_times():
    rng = np.random.default_rng(2)
    wave = Waveform(rng.standard_normal(16000), 16000)
    det = detector_features(wave)
    res = resegment_features(wave, start_time=1.5)
    t = frame_count(16000, 16000)
    assert det.frames.shape == (t, 57)
    assert res.frames.shape == (t, 60)
    assert np.allclose(det.frame_times(), np.arange(t) * 0.01)
    assert np.allclose(res.frame_times(), 1.5 + np.arange(t) * 0.01)


def test_features_deterministic_bit_identical():
    rng = np.random.default_rng(3)
    wave = Waveform(rng.standard_normal(8000), 16000)
    a = detector_features(wave)
    b = detector_features(Waveform(wave.samples.copy(), 16000))
    assert a.frames.tobytes() == b.frames.tobytes()


def test_delta_of_linear_ramp_is_slope():
    slope = np.array([0.5, -2.0, 3.0])
    base = np.arange(12.0)[:, None] * slope[None, :]
    out = add_derivatives(FeatureMatrix(base), order=2)
    assert out.frames.shape == (12, 9)
    # the 5-frame regression reproduces the slope away from the edges,
    # and the second derivative of a line vanishes
    assert np.allclose(out.frames[2:-2, 3:6], np.tile(slope, (8, 1)))
    assert np.allclose(out.frames[4:-4, 6:9], 0.0)


def test_delta_requires_enough_frames():
    with pytest.raises(ValueError):
        add_derivatives(FeatureMatrix(np.zeros((2, 4))), order=1)
    with pytest.raises(ValueError):
        add_derivatives(FeatureMatrix(np.zeros((5, 4))), order=3)


def test_standardize_moments():
    rng = np.random.default_rng(4)
    feats = FeatureMatrix(5.0 + 3.0 * rng.standard_normal((200, 6)))
    out = standardize(feats)
    assert np.allclose(out.frames.mean(axis=0), 0.0, atol=1e-12)
    assert np.allclose(out.frames.std(axis=0), 1.0, atol=1e-12)
    assert out.frame_step == feats.frame_step


def test_standardize_constant_column():
    frames = np.column_stack([np.full(50, 7.0), np.arange(50.0)])
    out = standardize(FeatureMatrix(frames))
    assert np.allclose(out.frames[:, 0], 0.0)
    assert np.all(np.isfinite(out.frames))


def test_waveform_validation():
    with pytest.raises(ValueError):
        Waveform(np.zeros((2, 100)), 16000)
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, np.nan]), 16000)
    with pytest.raises(ValueError):
        Waveform(np.zeros(10), 0)
