"""Pipeline configuration: one record holding every tunable default.

Serialized as TOML. Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib

from .errors import ConfigError


@dataclass
class CannyConfig:
    sigma: float = 1.4
    low: float = 0.1
    high: float = 0.25


@dataclass
class WarpConfig:
    # TPS regularization = lambda_scale * (mean pairwise control distance)^2
    lambda_scale: float = 0.001


@dataclass
class DetectorConfig:
    confidence_threshold: float = 0.5
    palette_k: int = 8
    palette_seed: int = 17
    palette_tau: float = 60.0
    edge_dist_thresh: float = 6.0
    pose_tol_fraction: float = 0.03
    min_area_fraction: float = 0.002
    padding: int = 12
    detection_dilate: int = 8


@dataclass
class ScaleRow:
    canny: float
    pose: float
    segmentation: float
    ip_adapter: float


@dataclass
class ScalesConfig:
    cloth_design: ScaleRow = field(default_factory=lambda: ScaleRow(0.9, 0.3, 0.4, 0.6))
    deformation: ScaleRow = field(default_factory=lambda: ScaleRow(0.2, 0.9, 0.7, 0.4))
    color_texture: ScaleRow = field(default_factory=lambda: ScaleRow(0.3, 0.3, 0.6, 0.9))


@dataclass
class RegionPhrases:
    hair: str = "hair"
    face_neck: str = "a face and neck"
    hands: str = "hands"
    upper_cloth: str = "upper-body clothing"
    lower_cloth: str = "lower-body clothing"
    other: str = "a person"


@dataclass
class PromptConfig:
    template: str = "a high quality photo of {region}, {caption}"
    fallback_template: str = "a high quality photo of {region}"
    negative: str = "lowres, bad anatomy, bad hands, deformed, blurry, watermark"
    region_phrases: RegionPhrases = field(default_factory=RegionPhrases)


@dataclass
class BackendConfig:
    endpoint: str = "http://127.0.0.1:9911"
    timeout: float = 30.0
    retries: int = 2
    blur_fill_radius: int = 8


@dataclass
class RunConfig:
    seeds: list[int] = field(default_factory=lambda: [8, 11])
    feather: int = 3
    parallelism: int = 1


@dataclass
class PipelineConfig:
    canny: CannyConfig = field(default_factory=CannyConfig)
    warp: WarpConfig = field(default_factory=WarpConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    scales: ScalesConfig = field(default_factory=ScalesConfig)
    prompt: PromptConfig = field(default_factory=PromptConfig)
    backend: BackendConfig = field(default_factory=BackendConfig)
    run: RunConfig = field(default_factory=RunConfig)

    def validate(self) -> None:
        c = self.canny
        if c.sigma <= 0:
            raise ConfigError("canny.sigma must be positive")
        if not (0 <= c.low < c.high):
            raise ConfigError("canny thresholds need 0 <= low < high")
        d = self.detector
        if not (0 <= d.confidence_threshold <= 1):
            raise ConfigError("detector.confidence_threshold must be in [0,1]")
        if not (1 <= d.palette_k <= 64):
            raise ConfigError("detector.palette_k must be in [1,64]")
        if d.palette_tau < 0 or d.edge_dist_thresh < 0:
            raise ConfigError("detector distance thresholds must be >= 0")
        if d.pose_tol_fraction <= 0:
            raise ConfigError("detector.pose_tol_fraction must be positive")
        if not (0 <= d.min_area_fraction <= 1):
            raise ConfigError("detector.min_area_fraction must be in [0,1]")
        if d.padding < 0 or d.detection_dilate < 0:
            raise ConfigError("detector paddings must be >= 0")
        if self.warp.lambda_scale < 0:
            raise ConfigError("warp.lambda_scale must be >= 0")
        for name in ("cloth_design", "deformation", "color_texture"):
            row = getattr(self.scales, name)
            for comp in ("canny", "pose", "segmentation", "ip_adapter"):
                v = getattr(row, comp)
                if not (0 <= v <= 1):
                    raise ConfigError(f"scales.{name}.{comp} must be in [0,1]")
        if not self.prompt.template or not self.prompt.fallback_template:
            raise ConfigError("prompt templates must be non-empty")
        b = self.backend
        if b.timeout <= 0 or b.retries < 0 or b.blur_fill_radius < 0:
            raise ConfigError("backend timeout/retries/blur_fill_radius out of range")
        r = self.run
        if not r.seeds:
            raise ConfigError("run.seeds must be non-empty")
        if r.feather < 0 or r.parallelism < 1:
            raise ConfigError("run.feather must be >= 0 and run.parallelism >= 1")


def _from_mapping(cls, data: dict, path: str):
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown config key(s) under '{path}': {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        f = fields[name]
        if dataclasses.is_dataclass(f.type) or (
            isinstance(f.type, str) and f.type in _NESTED
        ):
            sub_cls = _NESTED[f.type] if isinstance(f.type, str) else f.type
            if not isinstance(value, dict):
                raise ConfigError(f"'{path}.{name}' must be a table")
            kwargs[name] = _from_mapping(sub_cls, value, f"{path}.{name}")
        else:
            if isinstance(value, bool) or isinstance(value, dict):
                raise ConfigError(f"'{path}.{name}' has the wrong type")
            kwargs[name] = value
    obj = cls(**{**{k: v for k, v in kwargs.items()}})
    return obj


_NESTED = {
    c.__name__: c
    for c in (
        CannyConfig, WarpConfig, DetectorConfig, ScaleRow, ScalesConfig,
        RegionPhrases, PromptConfig, BackendConfig, RunConfig, PipelineConfig,
    )
}


def load_config(path) -> PipelineConfig:
    with open(path, "rb") as f:
        data = tomllib.load(f)
    cfg = _from_mapping(PipelineConfig, data, "config")
    cfg.validate()
    return cfg


def loads_config(text: str) -> PipelineConfig:
    cfg = _from_mapping(PipelineConfig, tomllib.loads(text), "config")
    cfg.validate()
    return cfg


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, list):
        return "[" + ", ".join(_fmt(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize config value {value!r}")


def _emit(obj, prefix: str, lines: list[str]) -> None:
    scalars = []
    nested = []
    for f in dataclasses.fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            nested.append((f.name, v))
        else:
            scalars.append((f.name, v))
    if prefix:
        lines.append(f"[{prefix}]")
    for name, v in scalars:
        lines.append(f"{name} = {_fmt(v)}")
    if scalars or prefix:
        lines.append("")
    for name, v in nested:
        _emit(v, f"{prefix}.{name}" if prefix else name, lines)


def dump_config(cfg: PipelineConfig) -> str:
    lines: list[str] = []
    _emit(cfg, "", lines)
    return "\n".join(lines).rstrip("\n") + "\n"


def save_config(cfg: PipelineConfig, path) -> None:
    with open(path, "w") as f:
        f.write(dump_config(cfg))
