"""Run configuration: every knob of the benchmark, serialized into outputs.

The config hash covers only fields that can change results; jobs and the
output directory are excluded so reruns with different worker counts or
destinations stay byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields

from skinbench.errors import ManifestError
from skinbench.extraction import ExtractionMethod, ExtractionParams

ALL_METHODS = tuple(m.value for m in ExtractionMethod)
ALL_RECOLORS = ("normalize", "variation")
ALL_LIGHTINGS = ("frontal", "paramount", "image-sh")

_NON_HASHED_FIELDS = {"jobs", "out_dir", "cache"}


@dataclass(frozen=True)
class RunConfig:
    methods: tuple[str, ...] = ALL_METHODS
    recolors: tuple[str, ...] = ALL_RECOLORS
    lightings: tuple[str, ...] = ALL_LIGHTINGS
    cascade_path: str = ""  # empty -> bundled stock cascade

    kmeans_seed: int = 0
    roi_width_frac: float = 0.15
    roi_horizontal_offset_frac: float = 0.18
    roi_vertical_offset_frac: float = 0.50
    roi_anchor: str = "mirror"

    tex_width: int = 128
    tex_height: int = 128
    tex_amplitude: float = 0.08
    tex_seed: int = 0
    tex_grid: int = 8

    proxy_kind: str = "sphere"  # "sphere" | "flat"
    exposure: float = math.pi
    render_roi: str = "coverage"  # "coverage" | "center-patch"

    jobs: int = 1
    cache: bool = True
    out_dir: str = "out"

    def __post_init__(self) -> None:
        object.__setattr__(self, "methods", tuple(self.methods))
        object.__setattr__(self, "recolors", tuple(self.recolors))
        object.__setattr__(self, "lightings", tuple(self.lightings))
        for name, allowed in (
            ("methods", ALL_METHODS),
            ("recolors", ALL_RECOLORS),
            ("lightings", ALL_LIGHTINGS),
        ):
            values = getattr(self, name)
            if not values:
                raise ManifestError(f"config {name} must be a non-empty subset")
            unknown = [v for v in values if v not in allowed]
            if unknown:
                raise ManifestError(f"config {name} has unknown entries {unknown}")
            if len(set(values)) != len(values):
                raise ManifestError(f"config {name} has duplicates")
        if self.proxy_kind not in ("sphere", "flat"):
            raise ManifestError(f"unknown proxy_kind {self.proxy_kind!r}")
        if self.render_roi not in ("coverage", "center-patch"):
            raise ManifestError(f"unknown render_roi {self.render_roi!r}")
        if self.jobs < 1:
            raise ManifestError("jobs must be >= 1")

    def extraction_params(self) -> ExtractionParams:
        return ExtractionParams(
            roi_width_frac=self.roi_width_frac,
            roi_horizontal_offset_frac=self.roi_horizontal_offset_frac,
            roi_vertical_offset_frac=self.roi_vertical_offset_frac,
            roi_anchor=self.roi_anchor,
            kmeans_seed=self.kmeans_seed,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = {
            k: v for k, v in sorted(self.to_dict().items()) if k not in _NON_HASHED_FIELDS
        }
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ManifestError(f"unknown config keys: {sorted(unknown)}")
        coerced = dict(data)
        for name in ("methods", "recolors", "lightings"):
            if name in coerced and isinstance(coerced[name], list):
                coerced[name] = tuple(coerced[name])
        return cls(**coerced)

    @classmethod
    def from_json_file(cls, path) -> "RunConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ManifestError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ManifestError(f"bad config JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ManifestError("config JSON must be an object")
        return cls.from_dict(data)
