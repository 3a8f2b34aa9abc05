"""Interval timelines and speaker-attributed annotations.

Two containers are shared by the whole pipeline:

* :class:`Timeline` -- a normalized set of unlabeled ``(onset, offset)``
  segments, used for voice activity and overlap regions.
* :class:`Annotation` -- ``(onset, offset, speaker)`` entries; entries of
  *different* speakers may overlap, which is how overlapped speech is
  represented in references and hypotheses.

Rasterization to a frame grid uses the frame-midpoint rule everywhere: a
segment covers frame ``t`` iff ``onset <= start + (t + 0.5) * step < offset``.
The inverse mapping treats frame ``t`` as the interval
``[start + t * step, start + (t + 1) * step)``.
"""

from __future__ import annotations

from typing import Iterable, Iterator, Sequence

import numpy as np

__all__ = ["Timeline", "Annotation", "frame_midpoints"]


def frame_midpoints(n_frames: int, frame_step: float, start_time: float = 0.0) -> np.ndarray:
    """Midpoint times of ``n_frames`` consecutive frame cells."""
    return start_time + (np.arange(n_frames) + 0.5) * frame_step


def _normalize_segments(segments) -> tuple:
    out = []
    for onset, offset in segments:
        onset = float(onset)
        offset = float(offset)
        if not (onset < offset):
            raise ValueError(f"segment onset must precede offset, got ({onset}, {offset})")
        if not (np.isfinite(onset) and np.isfinite(offset)):
            raise ValueError(f"segment bounds must be finite, got ({onset}, {offset})")
        out.append((onset, offset))
    out.sort()
    merged = []
    for onset, offset in out:
        if merged and onset <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], offset)
        else:
            merged.append([onset, offset])
    return tuple((a, b) for a, b in merged)


class Timeline:
    """Sorted, non-overlapping segments. Touching segments are merged."""

    __slots__ = ("segments",)

    def __init__(self, segments: Iterable[tuple] = ()):
        self.segments = _normalize_segments(segments)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.segments)

    def __getitem__(self, index):
        return self.segments[index]

    def __bool__(self) -> bool:
        return bool(self.segments)

    def __eq__(self, other) -> bool:
        return isinstance(other, Timeline) and self.segments == other.segments

    def __hash__(self):
        return hash(self.segments)

    def __repr__(self) -> str:
        inner = ", ".join(f"[{a:.3f}, {b:.3f}]" for a, b in self.segments[:4])
        if len(self.segments) > 4:
            inner += f", ... ({len(self.segments)} segments)"
        return f"Timeline({inner})"

    def duration(self) -> float:
        return float(sum(b - a for a, b in self.segments))

    def extent(self) -> tuple:
        if not self.segments:
            return (0.0, 0.0)
        return (self.segments[0][0], self.segments[-1][1])

    def union(self, other: "Timeline") -> "Timeline":
        return Timeline(self.segments + other.segments)

    def intersection(self, other: "Timeline") -> "Timeline":
        out = []
        i = j = 0
        a, b = self.segments, other.segments
        while i < len(a) and j < len(b):
            lo = max(a[i][0], b[j][0])
            hi = min(a[i][1], b[j][1])
            if lo < hi:
                out.append((lo, hi))
            if a[i][1] < b[j][1]:
                i += 1
            else:
                j += 1
        return Timeline(out)

    def crop(self, onset: float, offset: float) -> "Timeline":
        return self.intersection(Timeline([(onset, offset)]))

    def shift(self, delta: float) -> "Timeline":
        return Timeline([(a + delta, b + delta) for a, b in self.segments])

    def complement(self, onset: float, offset: float) -> "Timeline":
        """Gaps of this timeline within ``[onset, offset]``."""
        out = []
        cursor = onset
        for a, b in self.crop(onset, offset):
            if a > cursor:
                out.append((cursor, a))
            cursor = max(cursor, b)
        if cursor < offset:
            out.append((cursor, offset))
        return Timeline(out)

    def contains_times(self, times: np.ndarray) -> np.ndarray:
        """Boolean mask: which of ``times`` fall inside a segment (half-open)."""
        times = np.asarray(times, dtype=np.float64)
        if not self.segments:
            return np.zeros(times.shape, dtype=bool)
        onsets = np.array([a for a, _ in self.segments])
        offsets = np.array([b for _, b in self.segments])
        idx = np.searchsorted(onsets, times, side="right") - 1
        valid = idx >= 0
        out = np.zeros(times.shape, dtype=bool)
        out[valid] = times[valid] < offsets[idx[valid]]
        return out

    def to_mask(self, n_frames: int, frame_step: float, start_time: float = 0.0) -> np.ndarray:
        """Rasterize with the frame-midpoint rule."""
        return self.contains_times(frame_midpoints(n_frames, frame_step, start_time))

    @classmethod
    def from_mask(cls, mask: np.ndarray, frame_step: float, start_time: float = 0.0) -> "Timeline":
        """Inverse of :meth:`to_mask`: maximal runs of true frames become segments."""
        mask = np.asarray(mask, dtype=bool)
        if mask.ndim != 1:
            raise ValueError("mask must be one-dimensional")
        padded = np.concatenate(([False], mask, [False]))
        edges = np.flatnonzero(padded[1:] != padded[:-1])
        starts, stops = edges[0::2], edges[1::2]
        return cls(
            (start_time + i * frame_step, start_time + j * frame_step)
            for i, j in zip(starts, stops)
        )


class Annotation:
    """Speaker-attributed segments ("who spoke when").

    Entries are normalized per speaker (sorted, overlapping/touching runs of
    the same speaker merged); entries of distinct speakers may overlap freely.
    ``uri`` names the recording, as in RTTM files.
    """

    __slots__ = ("entries", "uri")

    def __init__(self, entries: Iterable[tuple] = (), uri: str = "rec"):
        by_speaker: dict = {}
        for onset, offset, speaker in entries:
            by_speaker.setdefault(str(speaker), []).append((onset, offset))
        normalized = []
        for speaker in sorted(by_speaker):
            for onset, offset in _normalize_segments(by_speaker[speaker]):
                normalized.append((onset, offset, speaker))
        normalized.sort(key=lambda e: (e[0], e[1], e[2]))
        self.entries = tuple(normalized)
        self.uri = uri

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[tuple]:
        return iter(self.entries)

    def __bool__(self) -> bool:
        return bool(self.entries)

    def __eq__(self, other) -> bool:
        return isinstance(other, Annotation) and self.entries == other.entries

    def __repr__(self) -> str:
        return f"Annotation({len(self.entries)} entries, {len(self.speakers())} speakers, uri={self.uri!r})"

    def speakers(self) -> list:
        return sorted({speaker for _, _, speaker in self.entries})

    def speaker_timeline(self, speaker: str) -> Timeline:
        return Timeline((a, b) for a, b, s in self.entries if s == speaker)

    def support(self) -> Timeline:
        """Union of all speakers' segments: the voiced timeline."""
        return Timeline((a, b) for a, b, _ in self.entries)

    def count_timeline(self, min_count: int) -> Timeline:
        """Regions where at least ``min_count`` speakers are simultaneously active."""
        events = []
        for onset, offset, _ in self.entries:
            events.append((onset, 1))
            events.append((offset, -1))
        events.sort()
        out = []
        active = 0
        run_start = None
        for time, delta in events:
            active += delta
            if active >= min_count and run_start is None:
                run_start = time
            elif active < min_count and run_start is not None:
                if time > run_start:
                    out.append((run_start, time))
                run_start = None
        return Timeline(out)

    def overlap_timeline(self) -> Timeline:
        return self.count_timeline(2)

    def crop(self, onset: float, offset: float) -> "Annotation":
        out = []
        for a, b, speaker in self.entries:
            lo, hi = max(a, onset), min(b, offset)
            if lo < hi:
                out.append((lo, hi, speaker))
        return Annotation(out, uri=self.uri)

    def shift(self, delta: float) -> "Annotation":
        return Annotation([(a + delta, b + delta, s) for a, b, s in self.entries], uri=self.uri)

    def renamed(self, mapping: dict) -> "Annotation":
        return Annotation(
            [(a, b, mapping.get(s, s)) for a, b, s in self.entries], uri=self.uri
        )

    def to_masks(
        self,
        n_frames: int,
        frame_step: float,
        start_time: float = 0.0,
        speakers: Sequence[str] | None = None,
    ) -> tuple:
        """Rasterize to per-speaker boolean masks.

        Returns ``(speakers, masks)`` where ``masks`` has shape (S, n_frames)
        and row order follows ``speakers`` (default: sorted speaker ids).
        """
        if speakers is None:
            speakers = self.speakers()
        masks = np.zeros((len(speakers), n_frames), dtype=bool)
        for i, speaker in enumerate(speakers):
            masks[i] = self.speaker_timeline(speaker).to_mask(n_frames, frame_step, start_time)
        return list(speakers), masks

    @classmethod
    def from_masks(
        cls,
        speakers: Sequence[str],
        masks: np.ndarray,
        frame_step: float,
        start_time: float = 0.0,
        uri: str = "rec",
    ) -> "Annotation":
        masks = np.asarray(masks, dtype=bool)
        if masks.shape[0] != len(speakers):
            raise ValueError("one mask row per speaker required")
        entries = []
        for speaker, row in zip(speakers, masks):
            for onset, offset in Timeline.from_mask(row, frame_step, start_time):
                entries.append((onset, offset, speaker))
        return cls(entries, uri=uri)
