"""Overlap-aware speaker diarization.

Detect frames where two speakers talk at once with a recurrent labeler,
refine an existing diarization with HMM smoothing over per-speaker Gaussian
models, and assign a second speaker inside the detected overlap regions.
"""

from .assign import assign_speakers, merge_frames, oracle_assignment
from .augment import ChunkSampler, mix_chunks, sample_batch
from .corpus import (
    SyntheticSpec,
    generate_conversation,
    load_manifest,
    primary_speaker_annotation,
    read_rttm,
    read_rttm_timeline,
    read_wav,
    write_manifest,
    write_rttm,
    write_wav,
)
from .detector import (
    LabelerConfig,
    LabelerModel,
    ScoreSequence,
    TrainOptions,
    bce_loss,
    forward,
    init_model,
    load_model,
    save_model,
    train,
)
from .features import (
    FeatureMatrix,
    Waveform,
    add_derivatives,
    detector_features,
    mfcc,
    resegment_features,
    standardize,
)
from .infer import SlidingConfig, binarize, slide_scores
from .kernels import active_backend
from .metrics import (
    DerReport,
    DetectionReport,
    aggregate_der,
    der,
    precision_recall,
    speaker_mapping,
    tune_threshold,
)
from .reseg import PosteriorMatrix, ResegConfig, init_q, resegment
from .timelines import Annotation, Timeline, frame_midpoints

__version__ = "0.1.0"
