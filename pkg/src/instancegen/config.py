"""Run configuration, loadable from a single JSON file with namespaced keys.

Example::

    {"prompt": "three dogs and two cats in a backyard",
     "seed": 0,
     "output_dir": "runs/dogs",
     "seed_search_max": 5,
     "backend_set": "synthetic",
     "backends": {"chat": {"name": "scripted", "options": {"fixture": "chat.json"}}},
     "generation": {"num_steps": 26, "guidance_scale": 4.0},
     "capture": {"branch": "conditional"},
     "aggregation": {"peak_min_distance": 2},
     "layout": {"max_area_fraction": 0.33},
     "guidance": {"attr_weight": 0.8, "learning_rate": 0.015},
     "assignment": {"max_attempts": 5},
     "timeout": 120}

Every ``guidance`` key names a field of either the loss weights or the
optimization schedule.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from .attention import AggregationConfig
from .backends import AttentionCapture, GenerationConfig
from .guidance import GuidanceWeights, OptimizationSchedule
from .layout import LayoutConfig

_TOP_KEYS = {"prompt", "seed", "output_dir", "seed_search_max", "backend_set", "backends", "generation",
             "capture", "aggregation", "layout", "guidance", "assignment", "timeout"}


class ConfigError(ValueError):
    pass


def _build(cls, data: dict | None, where: str):
    data = dict(data or {})
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys under {where!r}: {sorted(unknown)}")
    for k, v in data.items():
        if isinstance(v, list):
            data[k] = tuple(tuple(x) if isinstance(x, list) else x for x in v)
    if "extra_iterations" in data:
        data["extra_iterations"] = {int(k): int(v) for k, v in data["extra_iterations"].items()}
    try:
        return cls(**data)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where!r} settings: {exc}") from exc


@dataclass
class RunConfig:
    prompt: str
    seed: int = 0
    output_dir: str = "run"
    seed_search_max: int = 5
    backend_set: str = "synthetic"
    backends: dict[str, Any] = field(default_factory=dict)
    generation: GenerationConfig = field(default_factory=GenerationConfig)
    capture: AttentionCapture = field(default_factory=AttentionCapture)
    aggregation: AggregationConfig = field(default_factory=AggregationConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    weights: GuidanceWeights = field(default_factory=GuidanceWeights)
    schedule: OptimizationSchedule = field(default_factory=OptimizationSchedule)
    max_attempts: int = 5
    timeout: float | None = 120.0

    def __post_init__(self):
        if self.seed_search_max < 1:
            raise ConfigError("seed_search_max must be >= 1")
        if self.max_attempts < 1:
            raise ConfigError("assignment.max_attempts must be >= 1")
        if not self.prompt or not self.prompt.strip():
            raise ConfigError("prompt is empty")

    @classmethod
    def from_dict(cls, data: dict, **overrides) -> "RunConfig":
        data = {**data, **{k: v for k, v in overrides.items() if v is not None}}
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        if "prompt" not in data:
            raise ConfigError("config needs a prompt")
        guidance = dict(data.get("guidance", {}))
        w_names = {f.name for f in fields(GuidanceWeights)}
        s_names = {f.name for f in fields(OptimizationSchedule)}
        stray = set(guidance) - w_names - s_names
        if stray:
            raise ConfigError(f"unknown keys under 'guidance': {sorted(stray)}")
        return cls(
            prompt=data["prompt"],
            seed=int(data.get("seed", 0)),
            output_dir=str(data.get("output_dir", "run")),
            seed_search_max=int(data.get("seed_search_max", 5)),
            backend_set=data.get("backend_set", "synthetic"),
            backends=dict(data.get("backends", {})),
            generation=_build(GenerationConfig, data.get("generation"), "generation"),
            capture=_build(AttentionCapture, data.get("capture"), "capture"),
            aggregation=_build(AggregationConfig, data.get("aggregation"), "aggregation"),
            layout=_build(LayoutConfig, data.get("layout"), "layout"),
            weights=_build(GuidanceWeights, {k: v for k, v in guidance.items() if k in w_names}, "guidance"),
            schedule=_build(OptimizationSchedule, {k: v for k, v in guidance.items() if k in s_names}, "guidance"),
            max_attempts=int(data.get("assignment", {}).get("max_attempts", 5)),
            timeout=data.get("timeout", 120.0),
        )

    @classmethod
    def load(cls, path, **overrides) -> "RunConfig":
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data, **overrides)

    def to_dict(self) -> dict:
        schedule = asdict(self.schedule)
        schedule["extra_iterations"] = {str(k): v for k, v in self.schedule.extra_iterations.items()}
        return {
            "prompt": self.prompt,
            "seed": self.seed,
            "output_dir": self.output_dir,
            "seed_search_max": self.seed_search_max,
            "backend_set": self.backend_set,
            "backends": self.backends,
            "generation": asdict(self.generation),
            "capture": asdict(self.capture),
            "aggregation": asdict(self.aggregation),
            "layout": asdict(self.layout),
            "guidance": {**asdict(self.weights), **schedule},
            "assignment": {"max_attempts": self.max_attempts},
            "timeout": self.timeout,
        }
