"""Run configuration: one JSON file, four sections, strict keys.

Sections: "scoring" (kernel bandwidths), "pipeline" (selection budgets),
"sim" (scene synthesis), "eval" (metric protocol). Unknown sections or
keys are rejected by name so typos fail loudly instead of silently using
defaults. Command-line flags override file values after loading.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Dict, Mapping, Optional, Tuple

from .errors import ConfigError
from .objectness import ScoringConfig
from .selection import PipelineConfig
from .simulator import SimConfig


@dataclass(frozen=True)
class EvalConfig:
    """Metric protocol parameters."""

    distance_thresholds: Tuple[float, ...] = (0.5, 1.0, 2.0, 4.0)
    iou_threshold_known: float = 0.5
    iou_threshold_unknown: float = 0.1
    iou_thresholds_per_class: Dict[int, float] = field(default_factory=dict)
    confidence_threshold: float = 0.0
    interpolation_points: int = 40
    unknown_class_id: int = 100

    def __post_init__(self) -> None:
        thresholds = tuple(float(t) for t in self.distance_thresholds)
        if not thresholds or any(not (math.isfinite(t) and t > 0.0) for t in thresholds):
            raise ConfigError(
                f"distance_thresholds must be positive numbers, got {thresholds!r}"
            )
        object.__setattr__(self, "distance_thresholds", thresholds)
        for name in ("iou_threshold_known", "iou_threshold_unknown"):
            value = float(getattr(self, name))
            if not (0.0 < value <= 1.0):
                raise ConfigError(f"{name} must lie in (0, 1], got {value!r}")
            object.__setattr__(self, name, value)
        per_class = {}
        for key, value in dict(self.iou_thresholds_per_class).items():
            try:
                cid = int(key)
            except (TypeError, ValueError):
                raise ConfigError(f"iou_thresholds_per_class key {key!r} is not a class id")
            value = float(value)
            if not (0.0 < value <= 1.0):
                raise ConfigError(
                    f"iou_thresholds_per_class[{cid}] must lie in (0, 1], got {value!r}"
                )
            per_class[cid] = value
        object.__setattr__(self, "iou_thresholds_per_class", per_class)
        value = float(self.confidence_threshold)
        if not (math.isfinite(value) and 0.0 <= value <= 1.0):
            raise ConfigError(f"confidence_threshold must lie in [0, 1], got {value!r}")
        object.__setattr__(self, "confidence_threshold", value)
        if not isinstance(self.interpolation_points, int) or self.interpolation_points < 1:
            raise ConfigError(
                f"interpolation_points must be an integer >= 1, got {self.interpolation_points!r}"
            )
        if not isinstance(self.unknown_class_id, int):
            raise ConfigError(f"unknown_class_id must be an integer, got {self.unknown_class_id!r}")


_SECTIONS = {
    "scoring": ScoringConfig,
    "pipeline": PipelineConfig,
    "sim": SimConfig,
    "eval": EvalConfig,
}


@dataclass(frozen=True)
class RunConfig:
    scoring: ScoringConfig = field(default_factory=ScoringConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    sim: SimConfig = field(default_factory=SimConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)

    @classmethod
    def from_dict(cls, data: Mapping) -> "RunConfig":
        if not isinstance(data, Mapping):
            raise ConfigError(f"config root must be an object, got {type(data).__name__}")
        for section in data:
            if section not in _SECTIONS:
                raise ConfigError(f"unknown config section {section!r}")
        built = {}
        for section, section_cls in _SECTIONS.items():
            payload = data.get(section, {})
            if not isinstance(payload, Mapping):
                raise ConfigError(f"config section {section!r} must be an object")
            allowed = {f.name for f in fields(section_cls)}
            for key in payload:
                if key not in allowed:
                    raise ConfigError(f"unknown config key {section!r}.{key!r}")
            kwargs = dict(payload)
            for key, value in kwargs.items():
                if isinstance(value, list):
                    kwargs[key] = tuple(value)
            built[section] = section_cls(**kwargs)
        return cls(**built)

    def to_dict(self) -> dict:
        out = {name: asdict(getattr(self, name)) for name in _SECTIONS}
        # JSON object keys are strings
        out["eval"]["iou_thresholds_per_class"] = {
            str(k): v for k, v in out["eval"]["iou_thresholds_per_class"].items()
        }
        return out


def _set_dotted(data: dict, dotted: str, value) -> None:
    parts = dotted.split(".")
    if len(parts) != 2:
        raise ConfigError(f"override key must look like 'section.key', got {dotted!r}")
    section, key = parts
    data.setdefault(section, {})
    if not isinstance(data[section], dict):
        raise ConfigError(f"config section {section!r} must be an object")
    data[section][key] = value


def load_run_config(
    path: Optional[str] = None, overrides: Optional[Mapping[str, object]] = None
) -> RunConfig:
    """Load a config file (optional) and apply dotted-path overrides.

    Overrides map "section.key" to a value and win over file contents.
    Raises ConfigError for unreadable JSON, unknown sections/keys, or
    values the section constructors reject.
    """
    data: dict = {}
    if path is not None:
        raw = Path(path).read_text(encoding="utf-8")
        try:
            data = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: config root must be a JSON object")
    for dotted, value in (overrides or {}).items():
        if value is not None:
            _set_dotted(data, dotted, value)
    return RunConfig.from_dict(data)
