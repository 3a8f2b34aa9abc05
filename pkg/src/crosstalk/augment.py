"""Training-batch construction: fixed-length labeled chunks, half of them
artificial two-chunk mixtures.

Overlap labels are per frame: ``y_t = 1`` iff at least two distinct speakers
are active at the frame midpoint, ``0`` otherwise (zero or one speaker).
Mixtures sum the waveforms of two independently drawn chunks, with the
second scaled by a random gain, and merge the two chunks' speaker regions
after renaming so the speaker sets are disjoint.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .features import Waveform, detector_features, standardize
from .timelines import Timeline

__all__ = [
    "LabelSequence",
    "LabeledChunk",
    "labels_from_regions",
    "mix_chunks",
    "ChunkSampler",
    "sample_batch",
]

GAIN_RANGE_DB = (-10.0, 10.0)
CHUNK_DURATION = 2.0


@dataclass(frozen=True)
class LabelSequence:
    """Per-frame binary overlap labels aligned to a FeatureMatrix grid."""

    labels: np.ndarray
    frame_step: float
    start_time: float = 0.0

    def __post_init__(self):
        labels = np.asarray(self.labels)
        if labels.ndim != 1:
            raise ValueError("labels must be one-dimensional")
        if labels.size and not np.isin(labels, (0, 1)).all():
            raise ValueError("labels must be binary")
        object.__setattr__(self, "labels", labels.astype(np.int64))

    def __len__(self):
        return self.labels.size


@dataclass(frozen=True)
class LabeledChunk:
    """A fixed-duration waveform with per-speaker activity regions."""

    waveform: Waveform
    speaker_regions: dict

    def __post_init__(self):
        duration = self.waveform.duration
        for speaker, timeline in self.speaker_regions.items():
            if not isinstance(timeline, Timeline):
                raise ValueError(f"regions for {speaker!r} must be a Timeline")
            onset, offset = timeline.extent()
            if timeline and (onset < -1e-9 or offset > duration + 1e-9):
                raise ValueError(
                    f"regions for {speaker!r} exceed the chunk: "
                    f"[{onset}, {offset}] outside [0, {duration}]"
                )

    @property
    def duration(self) -> float:
        return self.waveform.duration


def labels_from_regions(speaker_regions: dict, n_frames: int, frame_step: float,
                        start_time: float = 0.0) -> LabelSequence:
    """Rasterize per-speaker regions into binary overlap labels."""
    if n_frames <= 0:
        raise ValueError("n_frames must be positive")
    counts = np.zeros(n_frames, dtype=np.int64)
    for timeline in speaker_regions.values():
        counts += timeline.to_mask(n_frames, frame_step, start_time)
    return LabelSequence((counts >= 2).astype(np.int64), frame_step, start_time)


def mix_chunks(a: LabeledChunk, b: LabeledChunk, gain_db: float) -> LabeledChunk:
    """Sum two chunks: ``samples = a + 10^(gain_db/20) * b``.

    Speaker ids from ``b`` are renamed where they collide with ``a``'s, so a
    chunk mixed with itself still counts as two distinct speakers.
    """
    if a.waveform.sample_rate != b.waveform.sample_rate:
        raise ValueError("sample rates differ")
    if a.waveform.samples.size != b.waveform.samples.size:
        raise ValueError("chunk durations differ")
    gain = 10.0 ** (gain_db / 20.0)
    samples = a.waveform.samples + gain * b.waveform.samples

    regions = dict(a.speaker_regions)
    for speaker, timeline in b.speaker_regions.items():
        name = speaker
        while name in regions:
            name += "'"
        regions[name] = timeline
    return LabeledChunk(Waveform(samples, a.waveform.sample_rate), regions)


class ChunkSampler:
    """Draws 2-second labeled chunks from a recording corpus.

    Each sampled item is, with probability ``p_artificial``, the sum of two
    independently drawn chunks (gain uniform in ``GAIN_RANGE_DB``), otherwise
    a single natural chunk. Drawing is fully driven by the generator passed
    to the sampling methods, so a fixed seed reproduces batches exactly.
    """

    def __init__(self, recordings, chunk_duration: float = CHUNK_DURATION,
                 p_artificial: float = 0.5):
        if not 0.0 <= p_artificial <= 1.0:
            raise ValueError("p_artificial must be in [0, 1]")
        self.chunk_duration = chunk_duration
        self.p_artificial = p_artificial
        self.recordings = [
            (wav, ann) for wav, ann in recordings if wav.duration >= chunk_duration
        ]
        if not self.recordings:
            raise DataError("empty corpus: no recording is at least one chunk long")
        slack = np.array([wav.duration - chunk_duration for wav, _ in self.recordings])
        self._weights = (slack + chunk_duration) / (slack + chunk_duration).sum()
        # saturation bookkeeping for mixtures (no clipping or normalization applied)
        self._mix_samples = 0
        self._mix_saturated = 0

    @property
    def saturation_fraction(self) -> float:
        """Fraction of mixture samples outside [-1, 1] so far."""
        return self._mix_saturated / self._mix_samples if self._mix_samples else 0.0

    def draw_chunk(self, rng: np.random.Generator) -> LabeledChunk:
        index = int(rng.choice(len(self.recordings), p=self._weights))
        waveform, annotation = self.recordings[index]
        rate = waveform.sample_rate
        max_start = waveform.duration - self.chunk_duration
        start = float(rng.uniform(0.0, max_start)) if max_start > 0 else 0.0
        start = round(start * rate) / rate
        end = start + self.chunk_duration
        chunk_wave = waveform.slice(start, end)
        regions = {}
        for speaker in annotation.speakers():
            timeline = annotation.speaker_timeline(speaker).crop(start, end).shift(-start)
            if timeline:
                regions[speaker] = timeline
        return LabeledChunk(chunk_wave, regions)

    def draw_item(self, rng: np.random.Generator):
        """One labeled chunk plus whether it is an artificial mixture."""
        is_mixture = bool(rng.random() < self.p_artificial)
        chunk = self.draw_chunk(rng)
        if is_mixture:
            gain_db = float(rng.uniform(*GAIN_RANGE_DB))
            chunk = mix_chunks(chunk, self.draw_chunk(rng), gain_db)
            self._mix_samples += chunk.waveform.samples.size
            self._mix_saturated += int(np.count_nonzero(np.abs(chunk.waveform.samples) > 1.0))
        return chunk, is_mixture

    def sample_batch(self, batch_size: int, rng: np.random.Generator):
        """A list of ``(FeatureMatrix, LabelSequence)`` pairs; features are
        the 57-dimensional detector front-end, standardized per chunk."""
        if batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        batch = []
        for _ in range(batch_size):
            chunk, _ = self.draw_item(rng)
            features = standardize(detector_features(chunk.waveform))
            labels = labels_from_regions(
                chunk.speaker_regions, features.n_frames, features.frame_step
            )
            batch.append((features, labels))
        return batch


def sample_batch(recordings, batch_size: int, p_artificial: float = 0.5,
                 seed: int = 0, chunk_duration: float = CHUNK_DURATION):
    """Convenience wrapper: one seeded batch from a list of
    ``(Waveform, Annotation)`` recordings."""
    sampler = ChunkSampler(recordings, chunk_duration, p_artificial)
    return sampler.sample_batch(batch_size, np.random.default_rng(seed))
