"""Command line interface.

Subcommands: ``synth`` (synthetic conversations), ``train`` (overlap
labeler), ``detect`` (sliding-window overlap detection), ``resegment``
(posterior refinement + speaker assignment) and ``score`` (detection and
diarization metrics).

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, kernels
from .assign import assign_speakers, oracle_assignment
from .config import PipelineConfig, load_config
from .corpus import (
    Manifest,
    ManifestEntry,
    SyntheticSpec,
    generate_conversation,
    load_manifest,
    primary_speaker_annotation,
    read_rttm,
    read_rttm_timeline,
    read_wav,
    write_manifest,
    write_rttm,
    write_timeline_csv,
    write_timeline_rttm,
    write_wav,
)
from .detector import load_model, save_model, train
from .errors import CrosstalkError, DataError
from .features import detector_features, resegment_features
from .infer import binarize, slide_scores
from .metrics import (
    aggregate_der,
    aggregate_detection,
    der,
    der_table,
    detection_table,
    precision_recall,
    reports_to_json,
    tune_threshold,
)
from .reseg import init_q, resegment
from .timelines import Annotation, Timeline

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class _Parser(argparse.ArgumentParser):
    # usage problems exit with code 1 (argparse defaults to 2)
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load_pipeline(args) -> PipelineConfig:
    if getattr(args, "config", None):
        return load_config(args.config)
    return PipelineConfig()


def _override(settings, args, names):
    values = {
        name: getattr(args, name)
        for name in names
        if getattr(args, name, None) is not None
    }
    return replace(settings, **values) if values else settings


# ---------------------------------------------------------------------------
# synth

def _cmd_synth(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    new_entries = []
    for i in range(args.count):
        uri = f"{args.prefix}{i:03d}"
        spec = SyntheticSpec(
            n_speakers=args.speakers,
            duration=args.duration,
            overlap_fraction=args.overlap,
            seed=args.seed + i,
            sample_rate=args.sample_rate,
        )
        waveform, annotation, overlap = generate_conversation(spec)
        annotation = Annotation(list(annotation), uri=uri)
        audio_path = out / f"{uri}.wav"
        ref_path = out / f"{uri}.ref.rttm"
        write_wav(audio_path, waveform)
        write_rttm(annotation, ref_path)
        write_timeline_rttm(overlap, out / f"{uri}.overlap.rttm", uri, "overlap")
        vad_path = None
        if args.emit_vad:
            vad_path = out / f"{uri}.vad.rttm"
            write_timeline_rttm(annotation.support(), vad_path, uri, "speech")
        if args.emit_baseline:
            write_rttm(primary_speaker_annotation(annotation),
                       out / f"{uri}.baseline.rttm")
        new_entries.append(
            ManifestEntry(audio_path.resolve(), ref_path.resolve(),
                          vad_path.resolve() if vad_path else None,
                          args.partition)
        )
        print(
            f"{uri}: {args.speakers} speakers, {waveform.duration:.1f}s, "
            f"overlap {overlap.duration() / annotation.support().duration():.1%}"
        )
    if args.manifest:
        manifest_path = Path(args.manifest)
        manifest = load_manifest(manifest_path) if manifest_path.exists() else Manifest()
        manifest.entries.extend(new_entries)
        write_manifest(manifest, manifest_path)
        print(f"manifest: {manifest_path} ({len(manifest)} entries)")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train

def _load_recordings(entries):
    return [(read_wav(e.audio), read_rttm(e.reference)) for e in entries]


def _cmd_train(args) -> int:
    from .augment import ChunkSampler

    pipeline = _load_pipeline(args)
    detector_cfg = _override(
        pipeline.detector, args,
        ("recurrent_layers", "recurrent_units", "ff_layers", "ff_units"),
    )
    options = _override(
        pipeline.training, args,
        ("learning_rate", "batch_size", "epochs", "batches_per_epoch", "seed"),
    )
    manifest = load_manifest(args.manifest)
    entries = manifest.partition("train")
    if not entries:
        raise DataError(f"{args.manifest}: train partition is empty")
    recordings = _load_recordings(entries)
    sampler = ChunkSampler(recordings, p_artificial=args.p_artificial)
    print(
        f"training on {len(recordings)} recordings "
        f"({sum(w.duration for w, _ in recordings):.0f}s), "
        f"backend {kernels.active_backend()}"
    )
    model = train(sampler, detector_cfg, options, log=print)
    save_model(model, args.out)
    print(f"model written to {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# detect

def _detect_one(model, sliding, audio_path, out_path, fmt):
    waveform = read_wav(audio_path)
    features = detector_features(waveform)
    scores = slide_scores(model, features, sliding)
    detected = binarize(scores, sliding)
    uri = Path(audio_path).stem
    if fmt == "csv":
        write_timeline_csv(detected, out_path)
    else:
        write_timeline_rttm(detected, out_path, uri, "overlap")
    return uri, detected.duration()


def _cmd_detect(args) -> int:
    pipeline = _load_pipeline(args)
    sliding = _override(
        pipeline.sliding, args,
        ("window", "hop", "threshold", "min_duration_on", "min_duration_off"),
    )
    model = load_model(args.model)
    if args.tune:
        if not args.manifest:
            raise DataError("--tune needs --manifest with a dev partition")
        entries = load_manifest(args.manifest).partition("dev")
        if not entries:
            raise DataError(f"{args.manifest}: dev partition is empty")
        items = []
        for entry in entries:
            features = detector_features(read_wav(entry.audio))
            scores = slide_scores(model, features, sliding)
            reference = read_rttm(entry.reference).overlap_timeline()
            items.append((scores, reference))
        theta = tune_threshold(items, args.target_precision)
        if theta is None:
            raise DataError(
                "dev references contain no overlap; cannot tune a threshold"
            )
        sliding = replace(sliding, threshold=theta)
        print(f"tuned threshold: {theta:.4f} "
              f"(target precision {args.target_precision:.0f}%)")
    audio_paths = [Path(p) for p in args.audio]
    if args.out and len(audio_paths) > 1:
        raise DataError("--out works with one input; use --out-dir for many")
    ext = "csv" if args.format == "csv" else "rttm"
    jobs = []
    for path in audio_paths:
        if args.out:
            target = Path(args.out)
        else:
            out_dir = Path(args.out_dir)
            out_dir.mkdir(parents=True, exist_ok=True)
            target = out_dir / f"{path.stem}.overlap.{ext}"
        jobs.append((path, target))
    if args.jobs > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(
                lambda job: _detect_one(model, sliding, job[0], job[1], args.format),
                jobs,
            ))
    else:
        results = [_detect_one(model, sliding, p, t, args.format) for p, t in jobs]
    for uri, seconds in results:
        print(f"{uri}: {seconds:.2f}s detected overlap")
    return EXIT_OK


# ---------------------------------------------------------------------------
# resegment

def _dump_q(q, path):
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(f"# frame_step {q.frame_step}\n")
        handle.write(f"# start_time {q.start_time}\n")
        handle.write("# speakers " + " ".join(q.speaker_ids) + "\n")
        np.savetxt(handle, q.q.T, fmt="%.6f", delimiter="\t")


def _cmd_resegment(args) -> int:
    pipeline = _load_pipeline(args)
    reseg_cfg = _override(
        pipeline.resegmentation, args,
        ("loop_probability", "n_iterations"),
    )
    waveform = read_wav(args.audio)
    features = resegment_features(waveform)
    baseline = read_rttm(args.baseline)
    vad = read_rttm_timeline(args.vad) if args.vad else baseline.support()

    if args.overlap == "none":
        overlap = Timeline()
    elif args.overlap == "detected":
        if not args.overlap_rttm:
            raise DataError("--overlap detected needs --overlap-rttm")
        overlap = read_rttm_timeline(args.overlap_rttm)
    else:  # oracle
        if not args.reference:
            raise DataError("--overlap oracle needs --reference")
        overlap = read_rttm(args.reference).overlap_timeline()

    q0 = init_q(baseline, vad, features.n_frames, features.frame_step,
                features.start_time)
    q = resegment(features, q0, reseg_cfg)
    if args.dump_q:
        _dump_q(q, args.dump_q)

    uri = baseline.uri
    if args.assign == "oracle":
        if not args.reference:
            raise DataError("--assign oracle needs --reference")
        result = oracle_assignment(
            read_rttm(args.reference), vad, overlap,
            features.n_frames, features.frame_step, features.start_time, uri,
        )
    else:
        result = assign_speakers(q, vad, overlap, uri)
    write_rttm(result.annotation, args.out)
    print(f"{uri}: wrote {len(result.annotation)} segments to {args.out}")
    print(result.diagnostics.summary())
    return EXIT_OK


# ---------------------------------------------------------------------------
# score

def _cmd_score(args) -> int:
    pipeline = _load_pipeline(args)
    collar = args.collar if args.collar is not None else pipeline.scoring.collar
    pairs = []
    if args.manifest:
        if not args.hypothesis_dir:
            raise DataError("--manifest scoring needs --hypothesis-dir")
        entries = load_manifest(args.manifest)
        if args.partition:
            entries = entries.partition(args.partition)
        else:
            entries = list(entries)
        if not entries:
            raise DataError("no recordings selected to score")
        hyp_dir = Path(args.hypothesis_dir)
        for entry in entries:
            stem = Path(entry.audio).stem
            candidates = [
                hyp_dir / f"{stem}.rttm",
                hyp_dir / f"{stem}.overlap.rttm",
                hyp_dir / f"{stem}.hyp.rttm",
            ]
            hyp_path = next((c for c in candidates if c.exists()), None)
            if hyp_path is None:
                raise DataError(f"no hypothesis for {stem} under {hyp_dir}")
            pairs.append((stem, entry.reference, hyp_path))
    else:
        if not (args.reference and args.hypothesis):
            raise DataError(
                "need --reference and --hypothesis, or --manifest"
            )
        pairs.append((Path(args.hypothesis).stem, args.reference, args.hypothesis))

    rows = {}
    if args.mode == "der":
        for name, ref_path, hyp_path in pairs:
            rows[name] = der(
                read_rttm(ref_path), read_rttm(hyp_path),
                collar=collar, method=args.mapping,
            )
        aggregate = aggregate_der(rows.values()) if len(rows) > 1 else None
        print(der_table(rows))
        if aggregate:
            print(f"{'ALL':<24}{aggregate.der:>8.2f}{aggregate.false_alarm:>8.2f}"
                  f"{aggregate.missed_detection:>8.2f}{aggregate.confusion:>8.2f}")
    else:
        for name, ref_path, hyp_path in pairs:
            if args.timeline_reference:
                reference = read_rttm_timeline(ref_path)
            else:
                reference = read_rttm(ref_path).overlap_timeline()
            hypothesis = read_rttm_timeline(hyp_path)
            rows[name] = precision_recall(reference, hypothesis)
        aggregate = aggregate_detection(rows.values()) if len(rows) > 1 else None
        print(detection_table(rows))
        if aggregate:
            print(f"{'ALL':<24}{aggregate.precision:>8.2f}{aggregate.recall:>8.2f}"
                  f"{aggregate.reference:>10.2f}{aggregate.detected:>10.2f}")
    if args.json:
        Path(args.json).write_text(reports_to_json(rows, aggregate))
        print(f"json report: {args.json}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="crosstalk",
        description="Overlap-aware speaker diarization toolkit.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command",
                               parser_class=_Parser)

    p = sub.add_parser("synth",
                       help="generate synthetic conversations")
    p.add_argument("--speakers", type=int, default=2)
    p.add_argument("--duration", type=float, default=60.0, help="seconds")
    p.add_argument("--overlap", type=float, default=0.15,
                   help="target overlapped fraction of speech time")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=1)
    p.add_argument("--sample-rate", type=int, default=16000)
    p.add_argument("--prefix", default="conv")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--emit-vad", action="store_true")
    p.add_argument("--emit-baseline", action="store_true",
                   help="also write the overlap-unaware single-speaker baseline")
    p.add_argument("--manifest", help="create or extend a corpus manifest")
    p.add_argument("--partition", choices=("train", "dev", "eval"),
                   default="train")
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("train",
                       help="train the overlap labeler")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out", required=True, help="model file (.npz)")
    p.add_argument("--config", help="pipeline YAML")
    p.add_argument("--recurrent-layers", type=int, dest="recurrent_layers")
    p.add_argument("--recurrent-units", type=int, dest="recurrent_units")
    p.add_argument("--ff-layers", type=int, dest="ff_layers")
    p.add_argument("--ff-units", type=int, dest="ff_units")
    p.add_argument("--learning-rate", type=float, dest="learning_rate")
    p.add_argument("--batch-size", type=int, dest="batch_size")
    p.add_argument("--epochs", type=int)
    p.add_argument("--batches-per-epoch", type=int, dest="batches_per_epoch")
    p.add_argument("--seed", type=int)
    p.add_argument("--p-artificial", type=float, default=0.5,
                   help="fraction of training chunks that are artificial mixtures")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("detect",
                       help="detect overlapped speech")
    p.add_argument("audio", nargs="+", help="wav file(s)")
    p.add_argument("--model", required=True)
    p.add_argument("--out", help="output file (single input)")
    p.add_argument("--out-dir", default=".", help="output directory")
    p.add_argument("--format", choices=("rttm", "csv"), default="rttm")
    p.add_argument("--config", help="pipeline YAML")
    p.add_argument("--window", type=float)
    p.add_argument("--hop", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--min-duration-on", type=float, dest="min_duration_on")
    p.add_argument("--min-duration-off", type=float, dest="min_duration_off")
    p.add_argument("--tune", action="store_true",
                   help="pick the threshold on the manifest dev partition")
    p.add_argument("--manifest", help="corpus manifest (for --tune)")
    p.add_argument("--target-precision", type=float, default=90.0,
                   dest="target_precision")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("resegment",
                       help="refine a diarization and assign overlap speakers")
    p.add_argument("--audio", required=True)
    p.add_argument("--baseline", required=True,
                   help="baseline diarization RTTM to refine")
    p.add_argument("--vad", help="speech regions RTTM "
                                 "(defaults to the baseline support)")
    p.add_argument("--out", required=True, help="output RTTM")
    p.add_argument("--config", help="pipeline YAML")
    p.add_argument("--loop-probability", type=float, dest="loop_probability")
    p.add_argument("--iterations", type=int, dest="n_iterations")
    p.add_argument("--overlap", choices=("none", "detected", "oracle"),
                   default="none",
                   help="where the overlap regions come from")
    p.add_argument("--overlap-rttm", help="detected overlap regions")
    p.add_argument("--reference",
                   help="reference RTTM (oracle overlap / oracle assignment)")
    p.add_argument("--assign", choices=("posterior", "oracle"),
                   default="posterior",
                   help="how overlap frames get their speakers")
    p.add_argument("--dump-q", dest="dump_q",
                   help="write the posterior matrix as text")
    p.set_defaults(func=_cmd_resegment)

    p = sub.add_parser("score",
                       help="score hypotheses")
    p.add_argument("--mode", choices=("der", "detection"), default="der")
    p.add_argument("--reference")
    p.add_argument("--hypothesis")
    p.add_argument("--manifest")
    p.add_argument("--hypothesis-dir", dest="hypothesis_dir")
    p.add_argument("--partition", choices=("train", "dev", "eval"))
    p.add_argument("--collar", type=float)
    p.add_argument("--mapping", choices=("hungarian", "brute"),
                   default="hungarian")
    p.add_argument("--timeline-reference", action="store_true",
                   help="detection mode: reference RTTM is already a "
                        "region timeline, not a speaker annotation")
    p.add_argument("--config", help="pipeline YAML")
    p.add_argument("--json", help="also write a JSON report")
    p.set_defaults(func=_cmd_score)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not getattr(args, "func", None):
        parser.print_help()
        return EXIT_USAGE
    try:
        return args.func(args)
    except CrosstalkError as exc:
        print(f"crosstalk: error: {exc}", file=sys.stderr)
        return exc.exit_code
    except ValueError as exc:
        print(f"crosstalk: error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
