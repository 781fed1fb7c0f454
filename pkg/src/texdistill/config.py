"""Run configuration: YAML-backed, schema-validated before any work starts."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field as dc_field, replace
from pathlib import Path

import yaml

from .geometry import CameraPolicy
from .guidance import GuidanceWeights, LAYER_SET_PRESETS
from .pipeline import DistillConfig, TimestepPolicy

SCHEMA_VERSION = 1

_KNOWN_BACKENDS_HINT = ("analytic", "external-diffusion")


@dataclass(frozen=True)
class ScheduleConfig:
    T: int = 1000
    beta_start: float = 1e-4
    beta_end: float = 0.02
    kind: str = "linear"


@dataclass(frozen=True)
class BakeConfig:
    resolution: int = 1024
    pad_iterations: int = 8
    atlas: str = "auto"   # "auto" (grid-chart fallback) | "none"


@dataclass(frozen=True)
class EvalConfig:
    views: int = 4
    view_size: int = 128
    provider: str = "mock-hash"
    provider_dimension: int = 64
    extractor: str = "synthetic-conv"


@dataclass(frozen=True)
class RunConfig:
    mesh: str
    reference_image: str
    prompt: str
    content_prompt: str
    output_dir: str
    seed: int = 0
    backend: str = "analytic"
    backend_options: dict = dc_field(default_factory=dict)
    layer_set: str = "styletex-extended"
    schedule: ScheduleConfig = ScheduleConfig()
    distill: DistillConfig = DistillConfig()
    baking: BakeConfig = BakeConfig()
    eval: EvalConfig = EvalConfig()
    schema_version: int = SCHEMA_VERSION


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(f"invalid config: {msg}")


def validate(cfg: RunConfig) -> RunConfig:
    _require(cfg.schema_version == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}")
    _require(bool(cfg.mesh), "mesh path is required")
    _require(bool(cfg.reference_image), "reference image path is required")
    _require(bool(cfg.prompt) and bool(cfg.content_prompt),
             "prompt and content_prompt must be non-empty")
    _require(cfg.layer_set in LAYER_SET_PRESETS,
             f"layer_set must be one of {sorted(LAYER_SET_PRESETS)}")
    _require(cfg.distill.iterations >= 1, "iterations must be >= 1")
    tp = cfg.distill.timestep_policy
    _require(0 < tp.min_t <= tp.max_t <= cfg.schedule.T,
             "need 0 < min_t <= max_t <= T")
    _require(cfg.baking.resolution >= 1, "bake resolution must be >= 1")
    _require(cfg.eval.views >= 1, "eval views must be >= 1")
    return cfg


def _listify(obj):
    if isinstance(obj, tuple):
        return [_listify(v) for v in obj]
    if isinstance(obj, list):
        return [_listify(v) for v in obj]
    if isinstance(obj, dict):
        return {k: _listify(v) for k, v in obj.items()}
    return obj


def to_dict(cfg: RunConfig) -> dict:
    return _listify(asdict(cfg))


def from_dict(data: dict) -> RunConfig:
    data = dict(data)
    unknown = set(data) - set(RunConfig.__dataclass_fields__)
    _require(not unknown, f"unknown fields: {sorted(unknown)}")
    for key in ("mesh", "reference_image", "prompt", "content_prompt", "output_dir"):
        _require(key in data, f"missing required field '{key}'")

    def sub(cls, raw, **nested):
        if raw is None:
            return cls()
        if not isinstance(raw, dict):
            raise ValueError(f"invalid config: expected mapping for {cls.__name__}")
        bad = set(raw) - set(cls.__dataclass_fields__)
        _require(not bad, f"unknown {cls.__name__} fields: {sorted(bad)}")
        raw = dict(raw)
        raw.update(nested)
        return cls(**raw)

    dis_raw = dict(data.get("distill") or {})
    weights = sub(GuidanceWeights, dis_raw.pop("weights", None))
    tp = sub(TimestepPolicy, dis_raw.pop("timestep_policy", None))
    cam_raw = dis_raw.pop("camera_policy", None)
    if cam_raw:
        cam_raw = {k: tuple(v) if isinstance(v, list) else v
                   for k, v in cam_raw.items()}
    cam = sub(CameraPolicy, cam_raw)
    for k in ("adam_betas", "background"):
        if k in dis_raw:
            dis_raw[k] = tuple(dis_raw[k])
    distill = sub(DistillConfig, dis_raw, weights=weights,
                  timestep_policy=tp, camera_policy=cam)

    cfg = RunConfig(
        mesh=data["mesh"],
        reference_image=data["reference_image"],
        prompt=data["prompt"],
        content_prompt=data["content_prompt"],
        output_dir=data["output_dir"],
        seed=int(data.get("seed", 0)),
        backend=data.get("backend", "analytic"),
        backend_options=dict(data.get("backend_options") or {}),
        layer_set=data.get("layer_set", "styletex-extended"),
        schedule=sub(ScheduleConfig, data.get("schedule")),
        distill=distill,
        baking=sub(BakeConfig, data.get("baking")),
        eval=sub(EvalConfig, data.get("eval")),
        schema_version=int(data.get("schema_version", SCHEMA_VERSION)),
    )
    return validate(cfg)


def load(path) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    with open(path) as f:
        data = yaml.safe_load(f)
    if not isinstance(data, dict):
        raise ValueError("invalid config: top level must be a mapping")
    return from_dict(data)


def save(cfg: RunConfig, path) -> None:
    with open(path, "w") as f:
        yaml.safe_dump(to_dict(cfg), f, sort_keys=True)
