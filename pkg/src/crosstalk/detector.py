"""Frame-level overlap labeler: stacked bidirectional LSTM, feed-forward
tanh layers, two-class softmax, trained with cross-entropy and plain SGD.

All math lives here and in :mod:`crosstalk.kernels`; there is no deep
learning framework dependency. Gradients are exact reverse-mode derivatives
of the forward pass (checked against finite differences in the test suite).

Model files are numpy ``.npz`` archives holding every parameter plus a JSON
header (format version, architecture, training metadata including the
per-epoch loss trace). Loading validates the version and all shapes.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import kernels
from .augment import LabelSequence
from .errors import DataError, TrainingDivergedError
from .features import FeatureMatrix

__all__ = [
    "LabelerConfig",
    "LabelerModel",
    "ScoreSequence",
    "TrainOptions",
    "init_model",
    "forward",
    "forward_batch",
    "batch_loss",
    "backward_batch",
    "bce_loss",
    "train",
    "save_model",
    "load_model",
]

FORMAT_VERSION = 1
_LOG_FLOOR = 1e-300


@dataclass(frozen=True)
class LabelerConfig:
    """Architecture of the overlap labeler.

    Defaults follow the reference setup: two bidirectional recurrent layers
    of 128 units per direction, two feed-forward tanh layers of 128 units,
    and a two-class softmax over 57-dimensional input frames.
    """

    input_dim: int = 57
    recurrent_layers: int = 2
    recurrent_units: int = 128
    ff_layers: int = 2
    ff_units: int = 128

    def __post_init__(self):
        for name in ("input_dim", "recurrent_layers", "recurrent_units",
                     "ff_layers", "ff_units"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")


@dataclass
class LabelerModel:
    config: LabelerConfig
    params: dict
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ScoreSequence:
    """Per-frame class probabilities, column 1 being overlap."""

    scores: np.ndarray
    frame_step: float
    start_time: float = 0.0

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        if scores.ndim != 2 or scores.shape[1] != 2:
            raise ValueError("scores must be (n_frames, 2)")
        if scores.size and (scores.min() < -1e-9 or scores.max() > 1.0 + 1e-9):
            raise ValueError("scores must lie in [0, 1]")
        object.__setattr__(self, "scores", scores)

    @property
    def overlap(self) -> np.ndarray:
        return self.scores[:, 1]

    def __len__(self):
        return self.scores.shape[0]


def _param_shapes(config: LabelerConfig):
    shapes = {}
    din = config.input_dim
    h = config.recurrent_units
    for layer in range(config.recurrent_layers):
        for direction in ("fw", "bw"):
            prefix = f"lstm{layer}_{direction}"
            shapes[f"{prefix}.Wx"] = (din, 4 * h)
            shapes[f"{prefix}.U"] = (h, 4 * h)
            shapes[f"{prefix}.b"] = (4 * h,)
        din = 2 * h
    for layer in range(config.ff_layers):
        shapes[f"ff{layer}.W"] = (din, config.ff_units)
        shapes[f"ff{layer}.b"] = (config.ff_units,)
        din = config.ff_units
    shapes["out.W"] = (din, 2)
    shapes["out.b"] = (2,)
    return shapes


def init_model(config: LabelerConfig, seed: int = 0) -> LabelerModel:
    """Fresh model: weights uniform in +-1/sqrt(fan_in), biases zero except
    the LSTM forget-gate bias, which starts at 1."""
    rng = np.random.default_rng(seed)
    h = config.recurrent_units
    params = {}
    for name, shape in _param_shapes(config).items():
        if name.endswith(".b"):
            value = np.zeros(shape)
            if name.startswith("lstm"):
                value[h:2 * h] = 1.0
        else:
            bound = 1.0 / np.sqrt(shape[0])
            value = rng.uniform(-bound, bound, size=shape)
        params[name] = value
    return LabelerModel(config, params, {"seed": seed})


def _run_direction(x, Wx, U, b, reverse):
    # x: (B, T, Din); the cache keeps everything in kernel (possibly
    # reversed) time order for the backward pass
    xs = x[:, ::-1] if reverse else x
    xg = xs @ Wx + b
    xg_t = np.ascontiguousarray(xg.transpose(1, 0, 2))
    h, c, gates = kernels.lstm_forward(xg_t, U)
    h_bt = h.transpose(1, 0, 2)
    out = h_bt[:, ::-1] if reverse else h_bt
    return out, (xs, h, c, gates)


def _run_direction_backward(cache, Wx, U, d_out, reverse):
    xs, h, c, gates = cache
    ds = d_out[:, ::-1] if reverse else d_out
    dh_t = np.ascontiguousarray(ds.transpose(1, 0, 2))
    dxg, dU = kernels.lstm_backward(dh_t, h, c, gates, U)
    dxg_bt = dxg.transpose(1, 0, 2)
    din = xs.shape[2]
    h4 = dxg_bt.shape[2]
    dWx = xs.reshape(-1, din).T @ dxg_bt.reshape(-1, h4)
    db = dxg_bt.sum(axis=(0, 1))
    dx = dxg_bt @ Wx.T
    if reverse:
        dx = dx[:, ::-1]
    return dx, dWx, db, dU


def _forward_internal(model: LabelerModel, X: np.ndarray):
    config = model.config
    p = model.params
    if X.ndim != 3 or X.shape[2] != config.input_dim:
        raise ValueError(
            f"expected input (B, T, {config.input_dim}), got {X.shape}"
        )
    caches = []
    cur = np.ascontiguousarray(X, dtype=np.float64)
    for layer in range(config.recurrent_layers):
        outs = []
        direction_caches = []
        for direction, reverse in (("fw", False), ("bw", True)):
            prefix = f"lstm{layer}_{direction}"
            out, cache = _run_direction(
                cur, p[f"{prefix}.Wx"], p[f"{prefix}.U"], p[f"{prefix}.b"], reverse
            )
            outs.append(out)
            direction_caches.append(cache)
        caches.append(direction_caches)
        cur = np.concatenate(outs, axis=2)
    for layer in range(config.ff_layers):
        a = np.tanh(cur @ p[f"ff{layer}.W"] + p[f"ff{layer}.b"])
        caches.append((cur, a))
        cur = a
    logits = cur @ p["out.W"] + p["out.b"]
    caches.append(cur)
    m = logits.max(axis=2, keepdims=True)
    e = np.exp(logits - m)
    probs = e / e.sum(axis=2, keepdims=True)
    return probs, caches


def _backward_internal(model: LabelerModel, caches, dlogits):
    config = model.config
    p = model.params
    grads = {}
    out_in = caches[-1]
    f_units = out_in.shape[2]
    grads["out.W"] = out_in.reshape(-1, f_units).T @ dlogits.reshape(-1, 2)
    grads["out.b"] = dlogits.sum(axis=(0, 1))
    d = dlogits @ p["out.W"].T
    for layer in reversed(range(config.ff_layers)):
        x_in, a = caches[config.recurrent_layers + layer]
        dpre = d * (1.0 - a * a)
        din = x_in.shape[2]
        grads[f"ff{layer}.W"] = (
            x_in.reshape(-1, din).T @ dpre.reshape(-1, a.shape[2])
        )
        grads[f"ff{layer}.b"] = dpre.sum(axis=(0, 1))
        d = dpre @ p[f"ff{layer}.W"].T
    h = config.recurrent_units
    for layer in reversed(range(config.recurrent_layers)):
        direction_caches = caches[layer]
        dx_total = None
        for k, (direction, reverse) in enumerate((("fw", False), ("bw", True))):
            prefix = f"lstm{layer}_{direction}"
            d_dir = d[:, :, k * h:(k + 1) * h]
            dx, dWx, db, dU = _run_direction_backward(
                direction_caches[k], p[f"{prefix}.Wx"], p[f"{prefix}.U"],
                d_dir, reverse,
            )
            grads[f"{prefix}.Wx"] = dWx
            grads[f"{prefix}.U"] = dU
            grads[f"{prefix}.b"] = db
            dx_total = dx if dx_total is None else dx_total + dx
        d = dx_total
    return grads


def forward_batch(model: LabelerModel, X: np.ndarray) -> np.ndarray:
    """Class probabilities for a batch of sequences, shape (B, T, 2)."""
    probs, _ = _forward_internal(model, X)
    return probs


def forward(model: LabelerModel, features: FeatureMatrix) -> ScoreSequence:
    """Score one feature sequence.

    Parameters
    ----------
    model : LabelerModel
    features : FeatureMatrix
        Frames with ``dim == model.config.input_dim``.

    Returns
    -------
    ScoreSequence
        Softmax outputs per frame; column 1 is the overlap probability.
    """
    probs = forward_batch(model, features.frames[None])[0]
    return ScoreSequence(probs, features.frame_step, features.start_time)


def _loss_and_dlogits(probs, Y):
    B, T, _ = probs.shape
    if Y.shape != (B, T):
        raise ValueError("labels must match (B, T)")
    onehot = np.eye(2)[Y]
    p_true = np.take_along_axis(probs, Y[..., None], axis=2)[..., 0]
    loss = float(-np.log(np.maximum(p_true, _LOG_FLOOR)).mean())
    dlogits = (probs - onehot) / (B * T)
    return loss, dlogits


def batch_loss(model: LabelerModel, X: np.ndarray, Y: np.ndarray) -> float:
    probs, _ = _forward_internal(model, X)
    return _loss_and_dlogits(probs, Y)[0]


def backward_batch(model: LabelerModel, X: np.ndarray, Y: np.ndarray):
    """Mean cross-entropy over all frames in the batch and its gradient
    with respect to every parameter.

    Returns
    -------
    (float, dict)
        Loss value and a dict with the same keys/shapes as
        ``model.params``.
    """
    probs, caches = _forward_internal(model, X)
    loss, dlogits = _loss_and_dlogits(probs, Y)
    grads = _backward_internal(model, caches, dlogits)
    return loss, grads


def bce_loss(scores, labels) -> float:
    """Cross-entropy of binary labels under per-frame scores:
    mean over frames of ``-log scores[t][y_t]``."""
    if isinstance(scores, ScoreSequence):
        scores = scores.scores
    labels = labels.labels if isinstance(labels, LabelSequence) else np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape[0] != labels.shape[0]:
        raise ValueError("scores and labels have different lengths")
    if labels.size == 0:
        raise ValueError("empty label sequence")
    p_true = scores[np.arange(labels.size), labels]
    return float(-np.log(np.maximum(p_true, _LOG_FLOOR)).mean())


@dataclass(frozen=True)
class TrainOptions:
    learning_rate: float = 0.2
    batch_size: int = 32
    epochs: int = 5
    batches_per_epoch: int = 50
    seed: int = 0
    clip_norm: float = 5.0

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.batch_size < 1 or self.epochs < 0 or self.batches_per_epoch < 1:
            raise ValueError("bad training sizes")


def _global_norm(grads):
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads.values())))


def train(sampler, config: LabelerConfig | None = None,
          options: TrainOptions | None = None, log=None) -> LabelerModel:
    """Train a labeler with SGD on seeded mini-batches.

    Parameters
    ----------
    sampler : ChunkSampler
        Source of labeled training chunks (see :mod:`crosstalk.augment`).
    config : LabelerConfig, optional
    options : TrainOptions, optional
        ``epochs == 0`` returns the freshly initialized model.
    log : callable, optional
        Called with one progress line per epoch.

    Returns
    -------
    LabelerModel
        With ``metadata['loss_trace']`` holding the mean loss per epoch.

    Raises
    ------
    TrainingDivergedError
        If the loss becomes non-finite.
    """
    config = config or LabelerConfig()
    options = options or TrainOptions()
    rng = np.random.default_rng(options.seed)
    model = init_model(config, options.seed)
    trace = []
    for epoch in range(options.epochs):
        batch_losses = []
        for _ in range(options.batches_per_epoch):
            batch = sampler.sample_batch(options.batch_size, rng)
            dims = {fm.dim for fm, _ in batch}
            if dims != {config.input_dim}:
                raise DataError(
                    f"feature dim {sorted(dims)} does not match model "
                    f"input_dim {config.input_dim}"
                )
            X = np.stack([fm.frames for fm, _ in batch])
            Y = np.stack([lab.labels for _, lab in batch])
            loss, grads = backward_batch(model, X, Y)
            if not np.isfinite(loss):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch + 1}"
                )
            norm = _global_norm(grads)
            scale = options.clip_norm / norm if (
                options.clip_norm > 0 and norm > options.clip_norm
            ) else 1.0
            step = options.learning_rate * scale
            for name in model.params:
                model.params[name] -= step * grads[name]
            batch_losses.append(loss)
        trace.append(float(np.mean(batch_losses)))
        if log:
            log(f"epoch {epoch + 1}/{options.epochs}  loss {trace[-1]:.4f}")
    model.metadata.update(
        seed=options.seed,
        epochs=options.epochs,
        batches_per_epoch=options.batches_per_epoch,
        batch_size=options.batch_size,
        learning_rate=options.learning_rate,
        loss_trace=trace,
        backend=kernels.active_backend(),
    )
    return model


def save_model(model: LabelerModel, path) -> None:
    """Write the model as an ``.npz`` with a JSON header array."""
    header = {
        "format_version": FORMAT_VERSION,
        "config": asdict(model.config),
        "metadata": model.metadata,
    }
    arrays = {f"param.{name}": value for name, value in model.params.items()}
    arrays["header"] = np.array(json.dumps(header))
    np.savez(path, **arrays)


def load_model(path) -> LabelerModel:
    """Read a model written by :func:`save_model`, validating the format
    version and every parameter shape."""
    try:
        data = np.load(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot read model file {path}: {exc}") from exc
    with data:
        if "header" not in data.files:
            raise DataError(f"{path}: not a labeler model (missing header)")
        header = json.loads(str(data["header"]))
        version = header.get("format_version")
        if version != FORMAT_VERSION:
            raise DataError(
                f"{path}: unsupported model format version {version!r}"
            )
        config = LabelerConfig(**header["config"])
        params = {
            name.removeprefix("param."): data[name]
            for name in data.files if name.startswith("param.")
        }
    expected = _param_shapes(config)
    if set(params) != set(expected):
        raise DataError(f"{path}: parameter set does not match architecture")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise DataError(
                f"{path}: parameter {name} has shape {params[name].shape}, "
                f"expected {shape}"
            )
    return LabelerModel(config, params, header.get("metadata", {}))
