"""Pipeline configuration: a YAML file mapping onto the per-stage option
dataclasses. Unknown keys are rejected so typos fail loudly instead of
silently running defaults.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import yaml

from .detector import LabelerConfig, TrainOptions
from .errors import DataError
from .infer import SlidingConfig
from .reseg import ResegConfig

__all__ = ["ScoringOptions", "PipelineConfig", "load_config"]


@dataclass(frozen=True)
class ScoringOptions:
    collar: float = 0.0
    target_precision: float = 90.0

    def __post_init__(self):
        if self.collar < 0:
            raise ValueError("collar must be >= 0")
        if not 0.0 < self.target_precision <= 100.0:
            raise ValueError("target_precision must be in (0, 100]")


@dataclass(frozen=True)
class PipelineConfig:
    detector: LabelerConfig = field(default_factory=LabelerConfig)
    training: TrainOptions = field(default_factory=TrainOptions)
    sliding: SlidingConfig = field(default_factory=SlidingConfig)
    resegmentation: ResegConfig = field(default_factory=ResegConfig)
    scoring: ScoringOptions = field(default_factory=ScoringOptions)


_SECTIONS = {f.name: f for f in fields(PipelineConfig)}


def _build_section(cls, mapping, path, section):
    if not isinstance(mapping, dict):
        raise DataError(f"{path}: section '{section}' must be a mapping")
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise DataError(
            f"{path}: unknown keys in '{section}': {', '.join(sorted(unknown))}"
        )
    try:
        return cls(**mapping)
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: bad value in '{section}': {exc}") from exc


def load_config(path) -> PipelineConfig:
    """Read a pipeline configuration from YAML.

    Top-level sections are ``detector``, ``training``, ``sliding``,
    ``resegmentation`` and ``scoring``; every key is optional and unknown
    keys anywhere are an error.
    """
    try:
        with open(path) as handle:
            raw = yaml.safe_load(handle)
    except OSError as exc:
        raise DataError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise DataError(f"{path}: invalid YAML: {exc}") from exc
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise DataError(f"{path}: top level must be a mapping")
    unknown = set(raw) - set(_SECTIONS)
    if unknown:
        raise DataError(
            f"{path}: unknown sections: {', '.join(sorted(unknown))}"
        )
    kwargs = {}
    for name, spec in _SECTIONS.items():
        if name in raw:
            kwargs[name] = _build_section(
                spec.default_factory, raw[name], path, name
            )
    return PipelineConfig(**kwargs)
