"""Data plumbing: WAV and RTTM I/O, dataset manifests, and a seeded
synthetic conversation generator used as a desk-scale stand-in for real
meeting corpora.

File formats
------------
* WAV: mono PCM16 or float32, read/written via :mod:`scipy.io.wavfile`.
* RTTM: ``SPEAKER <uri> <chan> <onset> <dur> <NA> <NA> <speaker> <NA> <NA>``
  with onset/duration written at 3 decimal places. Unlabeled timelines
  (VAD, overlap regions) are RTTM files whose speaker field carries a
  single label such as ``overlap``.
* Manifest: one recording per line,
  ``<audio>\t<reference_rttm>\t<vad_rttm or '-'>\t<partition>``,
  paths relative to the manifest file, partition one of train/dev/eval.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.io import wavfile

from .errors import DataError, GenerationError, ManifestError, RttmParseError
from .features import Waveform
from .timelines import Annotation, Timeline

__all__ = [
    "read_wav", "write_wav",
    "read_rttm", "read_rttm_timeline", "write_rttm",
    "write_timeline_rttm", "write_timeline_csv",
    "ManifestEntry", "Manifest", "load_manifest", "write_manifest",
    "SyntheticSpec", "generate_conversation", "primary_speaker_annotation",
]

PARTITIONS = ("train", "dev", "eval")


# ---------------------------------------------------------------------------
# WAV I/O

def read_wav(path) -> Waveform:
    """Read a mono PCM16/PCM32/float32 WAV file, scaled to [-1, 1] floats."""
    try:
        rate, data = wavfile.read(path)
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except ValueError as exc:
        raise DataError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.ndim != 1:
        raise DataError(f"{path}: expected mono audio, got shape {data.shape}")
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        samples = data.astype(np.float64)
    else:
        raise DataError(f"{path}: unsupported WAV sample format {data.dtype}")
    return Waveform(samples, rate)


def write_wav(path, waveform: Waveform, encoding: str = "pcm16") -> None:
    if encoding == "pcm16":
        clipped = np.clip(waveform.samples, -1.0, 1.0)
        wavfile.write(path, waveform.sample_rate, (clipped * 32767.0).round().astype(np.int16))
    elif encoding == "float32":
        wavfile.write(path, waveform.sample_rate, waveform.samples.astype(np.float32))
    else:
        raise ValueError(f"unknown encoding {encoding!r}")


# ---------------------------------------------------------------------------
# RTTM I/O

# record types defined by the RTTM spec that we silently skip
_OTHER_RTTM_TYPES = {"SPKR-INFO", "NON-LEX", "NON-SPEECH", "LEXEME", "SEGMENT"}


def _parse_rttm_lines(path):
    entries = []
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise RttmParseError(f"cannot read {path}: {exc}") from exc
    with handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith(";;"):
                continue
            fields = line.split()
            if fields[0] in _OTHER_RTTM_TYPES:
                continue
            if fields[0] != "SPEAKER":
                raise RttmParseError(f"{path}:{lineno}: unknown record type {fields[0]!r}")
            if len(fields) < 8:
                raise RttmParseError(f"{path}:{lineno}: expected >= 8 fields, got {len(fields)}")
            uri = fields[1]
            try:
                onset = float(fields[3])
                duration = float(fields[4])
            except ValueError as exc:
                raise RttmParseError(f"{path}:{lineno}: bad onset/duration: {exc}") from None
            if duration <= 0:
                raise RttmParseError(f"{path}:{lineno}: non-positive duration {duration}")
            if onset < 0:
                raise RttmParseError(f"{path}:{lineno}: negative onset {onset}")
            entries.append((uri, onset, onset + duration, fields[7]))
    return entries


def read_rttm(path) -> Annotation:
    """Read speaker segments from an RTTM file into an Annotation.

    The file must describe a single recording; mixed URIs raise.
    Same-speaker segments that overlap or touch are merged on load.
    """
    entries = _parse_rttm_lines(path)
    uris = sorted({uri for uri, *_ in entries})
    if len(uris) > 1:
        raise RttmParseError(f"{path}: multiple recordings in one file: {uris}")
    uri = uris[0] if uris else "rec"
    return Annotation([(a, b, s) for _, a, b, s in entries], uri=uri)


def read_rttm_timeline(path) -> Timeline:
    """Read an RTTM file as an unlabeled timeline (speaker fields ignored)."""
    entries = _parse_rttm_lines(path)
    return Timeline((a, b) for _, a, b, _ in entries)


def write_rttm(annotation: Annotation, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for onset, offset, speaker in annotation:
            handle.write(
                f"SPEAKER {annotation.uri} 1 {onset:.3f} {offset - onset:.3f} "
                f"<NA> <NA> {speaker} <NA> <NA>\n"
            )


def write_timeline_rttm(timeline: Timeline, path, uri: str = "rec", label: str = "overlap") -> None:
    write_rttm(Annotation([(a, b, label) for a, b in timeline], uri=uri), path)


def write_timeline_csv(timeline: Timeline, path) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write("onset,offset\n")
        for onset, offset in timeline:
            handle.write(f"{onset:.3f},{offset:.3f}\n")


# ---------------------------------------------------------------------------
# Manifests

@dataclass(frozen=True)
class ManifestEntry:
    audio: Path
    reference: Path
    vad: Path | None
    partition: str


@dataclass
class Manifest:
    entries: list = field(default_factory=list)

    def partition(self, name: str) -> list:
        return [e for e in self.entries if e.partition == name]

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)


def load_manifest(path) -> Manifest:
    path = Path(path)
    root = path.parent
    entries = []
    seen = {}
    try:
        handle = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read {path}: {exc}") from exc
    with handle:
        for lineno, raw in enumerate(handle, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split("\t")
            if len(fields) != 4:
                raise ManifestError(f"{path}:{lineno}: expected 4 tab-separated fields")
            audio, reference, vad, partition = fields
            if partition not in PARTITIONS:
                raise ManifestError(
                    f"{path}:{lineno}: partition must be one of {PARTITIONS}, got {partition!r}"
                )
            audio_path = (root / audio).resolve()
            ref_path = (root / reference).resolve()
            vad_path = None if vad == "-" else (root / vad).resolve()
            for p in (audio_path, ref_path) + ((vad_path,) if vad_path else ()):
                if not p.exists():
                    raise ManifestError(f"{path}:{lineno}: missing file {p}")
            if audio_path in seen and seen[audio_path] != partition:
                raise ManifestError(
                    f"{path}:{lineno}: {audio_path.name} appears in partitions "
                    f"{seen[audio_path]!r} and {partition!r}"
                )
            seen[audio_path] = partition
            entries.append(ManifestEntry(audio_path, ref_path, vad_path, partition))
    return Manifest(entries)


def write_manifest(manifest: Manifest, path) -> None:
    path = Path(path)
    root = path.parent.resolve()

    def rel(p):
        try:
            return str(Path(p).resolve().relative_to(root))
        except ValueError:
            return str(p)

    with open(path, "w", encoding="utf-8") as handle:
        for e in manifest.entries:
            vad = rel(e.vad) if e.vad else "-"
            handle.write(f"{rel(e.audio)}\t{rel(e.reference)}\t{vad}\t{e.partition}\n")


# ---------------------------------------------------------------------------
# Synthetic conversations

@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic conversation.

    ``overlap_fraction`` is the target fraction of *speech* time carrying two
    simultaneous speakers, mirroring how meeting corpora report overlap.
    Speakers get distinct harmonic signatures (fundamental, spectral tilt,
    a private noise band) so cepstral features separate them cleanly.
    """

    n_speakers: int
    duration: float
    overlap_fraction: float
    seed: int
    sample_rate: int = 16000
    speech_fraction: float = 0.85

    def __post_init__(self):
        if self.n_speakers < 1:
            raise GenerationError(f"n_speakers must be >= 1, got {self.n_speakers}")
        if not (0.0 <= self.overlap_fraction < 1.0):
            raise GenerationError(
                f"overlap_fraction must be in [0, 1), got {self.overlap_fraction}"
            )
        if self.n_speakers == 1 and self.overlap_fraction > 0:
            raise GenerationError("a single speaker cannot produce overlapped speech")
        if self.duration <= 2.0:
            raise GenerationError("conversation duration must exceed 2 seconds")


_OVERLAP_TOLERANCE = 0.05   # +/- 5 percentage points on the realized fraction
_MIN_TURN = 0.8
_MAX_TURN = 6.0
_MEAN_TURN = 2.5


def _speaker_voice(index: int, rng: np.random.Generator, nyquist: float) -> dict:
    f0 = 105.0 + 75.0 * index + rng.uniform(-8.0, 8.0)
    return {
        "f0": f0,
        "tilt": 0.7 + 0.5 * (index % 3),
        "n_harmonics": max(3, min(12, int(0.85 * nyquist / f0))),
        "phases": rng.uniform(0.0, 2.0 * math.pi, size=12),
        "band": (700.0 + 650.0 * index, 1500.0 + 650.0 * index),
        "band_gain": 0.25,
        "rms": 0.08,
        "mod_phase": rng.uniform(0.0, 2.0 * math.pi),
    }


def _render_segment(buffer: np.ndarray, onset: float, offset: float,
                    voice: dict, rate: int, rng: np.random.Generator) -> None:
    i = int(round(onset * rate))
    j = min(int(round(offset * rate)), buffer.size)
    if j <= i:
        return
    t = np.arange(i, j) / rate
    signal = np.zeros(j - i)
    for k in range(1, voice["n_harmonics"] + 1):
        amp = k ** (-voice["tilt"])
        signal += amp * np.sin(2.0 * math.pi * k * voice["f0"] * t + voice["phases"][k - 1])
    signal /= max(np.sqrt(np.mean(signal ** 2)), 1e-9)

    noise = rng.standard_normal(j - i)
    spectrum = np.fft.rfft(noise)
    freqs = np.fft.rfftfreq(j - i, d=1.0 / rate)
    lo, hi = voice["band"]
    hi = min(hi, rate / 2.0 - 1.0)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    banded = np.fft.irfft(spectrum, j - i)
    band_rms = np.sqrt(np.mean(banded ** 2))
    if band_rms > 1e-9:
        signal += voice["band_gain"] * banded / band_rms

    # slow level modulation so energy alone is not a constant
    signal *= 1.0 + 0.2 * np.sin(2.0 * math.pi * 0.5 * t + voice["mod_phase"])

    ramp = min(int(0.010 * rate), (j - i) // 2)
    if ramp > 0:
        window = np.ones(j - i)
        edge = 0.5 * (1.0 - np.cos(np.pi * np.arange(ramp) / ramp))
        window[:ramp] = edge
        window[-ramp:] = edge[::-1]
        signal *= window

    buffer[i:j] += voice["rms"] * signal


def generate_conversation(spec: SyntheticSpec) -> tuple:
    """Generate one conversation: returns (Waveform, Annotation, overlap Timeline).

    Alternating speaker turns with exponential-ish durations; overlap is
    created by interjections placed inside existing turns until the realized
    overlapped-speech fraction reaches the target (within 5 percentage
    points, else GenerationError). The returned overlap timeline is computed
    from the returned annotation, so ground truth is self-consistent by
    construction.
    """
    rng = np.random.default_rng(spec.seed)
    rate = spec.sample_rate

    # lay down non-overlapping turns
    gap_mean = _MEAN_TURN * (1.0 - spec.speech_fraction) / max(spec.speech_fraction, 1e-6)
    turns = []
    cursor = float(rng.exponential(gap_mean / 2.0))
    previous = -1
    while cursor < spec.duration - _MIN_TURN:
        if spec.n_speakers == 1:
            speaker = 0
        else:
            speaker = int(rng.integers(spec.n_speakers - 1))
            if speaker >= previous:
                speaker += 1
        length = float(np.clip(rng.exponential(_MEAN_TURN), _MIN_TURN, _MAX_TURN))
        end = min(cursor + length, spec.duration)
        if end - cursor >= _MIN_TURN / 2:
            turns.append([cursor, end, speaker, []])
            previous = speaker
        cursor = end + float(rng.exponential(gap_mean))
    if not turns:
        raise GenerationError("conversation too short to place any turn")

    support = sum(end - start for start, end, _, _ in turns)
    target_overlap = spec.overlap_fraction * support

    # interjections: a second speaker inside an existing turn
    realized = 0.0
    attempts = 0
    interjections = []
    while realized < target_overlap and attempts < 10000:
        attempts += 1
        start, end, speaker, used = turns[int(rng.integers(len(turns)))]
        margin = 0.1
        room = (end - start) - 2 * margin
        if room < 0.3:
            continue
        length = float(rng.uniform(0.3, min(1.5, room)))
        # do not overshoot the target by more than the tolerance allows
        length = min(length, max(0.3, target_overlap - realized + 0.02 * support))
        pos = float(rng.uniform(start + margin, end - margin - length))
        candidate = (pos, pos + length)
        if any(candidate[0] < b and a < candidate[1] for a, b in used):
            continue
        other = int(rng.integers(spec.n_speakers - 1))
        if other >= speaker:
            other += 1
        used.append(candidate)
        interjections.append((candidate[0], candidate[1], other))
        realized += length

    realized_fraction = realized / support if support else 0.0
    if abs(realized_fraction - spec.overlap_fraction) > _OVERLAP_TOLERANCE:
        raise GenerationError(
            f"could not reach overlap target {spec.overlap_fraction:.2f} "
            f"(realized {realized_fraction:.2f})"
        )

    entries = [(start, end, f"spk{speaker}") for start, end, speaker, _ in turns]
    entries += [(a, b, f"spk{speaker}") for a, b, speaker in interjections]
    annotation = Annotation(entries, uri=f"synth{spec.seed}")

    # render audio
    n_samples = int(round(spec.duration * rate))
    buffer = 0.001 * rng.standard_normal(n_samples)
    voices = [_speaker_voice(s, rng, rate / 2.0) for s in range(spec.n_speakers)]
    for onset, offset, speaker in annotation:
        _render_segment(buffer, onset, offset, voices[int(speaker[3:])], rate, rng)

    return Waveform(buffer, rate), annotation, annotation.overlap_timeline()


def primary_speaker_annotation(reference: Annotation) -> Annotation:
    """Collapse a reference to a single speaker everywhere: in overlap
    regions only the speaker whose segment started first survives.

    This is the degraded, overlap-unaware baseline used to initialize
    resegmentation experiments.
    """
    events = sorted({t for a, b, _ in reference for t in (a, b)})
    entries = []
    for lo, hi in zip(events[:-1], events[1:]):
        active = [(a, s) for a, b, s in reference.entries if a <= lo and b >= hi]
        if active:
            winner = min(active)[1]
            entries.append((lo, hi, winner))
    return Annotation(entries, uri=reference.uri)
