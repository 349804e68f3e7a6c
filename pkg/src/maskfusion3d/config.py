"""Pipeline configuration."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from typing import Any

# keys whose values must lie strictly inside (0, 1)
_UNIT_INTERVAL_KEYS = ("alpha", "tau_f", "tau_m", "tau_merge", "nms_iou", "consistency_nms_iou")


@dataclass(frozen=True)
class PipelineConfig:
    """Every tunable of the pipeline, with defaults.

    ``alpha``, ``tau_f``, ``tau_m`` and ``tau_merge`` default to the values
    the method was published with; the remaining knobs are artifact choices.
    """

    alpha: float = 0.05
    tau_f: float = 0.3
    tau_m: float = 0.9
    tau_merge: float = 0.5
    nms_iou: float = 0.5
    consistency_nms_iou: float = 0.5
    refine_max_iters: int = 10
    k_graph: int = 12
    weight_scale: float = 0.05
    min_size: int = 20
    seed: int = 0
    use_depth_weights: bool = True
    use_matching: bool = True
    use_refinement: bool = True

    def violations(self) -> list[str]:
        out = []
        for key in _UNIT_INTERVAL_KEYS:
            value = getattr(self, key)
            if not 0.0 < value < 1.0:
                out.append(f"config.{key}: {value!r} not in (0, 1)")
        if self.refine_max_iters < 1:
            out.append(f"config.refine_max_iters: {self.refine_max_iters!r} < 1")
        if self.k_graph < 1:
            out.append(f"config.k_graph: {self.k_graph!r} < 1")
        if self.min_size < 1:
            out.append(f"config.min_size: {self.min_size!r} < 1")
        if not self.weight_scale > 0:
            out.append(f"config.weight_scale: {self.weight_scale!r} <= 0")
        return out

    def replace(self, **changes: Any) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "PipelineConfig":
        known = {f.name: f for f in fields(cls)}
        unknown = sorted(set(data) - set(known))
        if unknown:
            raise KeyError(f"unknown config keys: {', '.join(unknown)}")
        kwargs = {}
        for key, value in data.items():
            kwargs[key] = coerce_field(key, value)
        return cls(**kwargs)


def field_types() -> dict[str, type]:
    defaults = PipelineConfig()
    return {f.name: type(getattr(defaults, f.name)) for f in fields(PipelineConfig)}


def coerce_field(key: str, value: Any) -> Any:
    """Convert ``value`` (possibly a CLI string) to the type of config field ``key``."""
    kind = field_types()[key]
    if kind is bool:
        if isinstance(value, bool):
            return value
        text = str(value).strip().lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: cannot parse {value!r} as a boolean")
    if kind is int:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ValueError(f"{key}: expected an integer, got {value!r}")
        return int(value)
    return float(value)
