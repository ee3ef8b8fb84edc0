"""Run configuration: one dataclass tree, JSON on disk, dotted-path overrides.

Every leaf key can be overridden on the command line by a flag of the same
dotted name (for example ``--model.layers 3`` or
``--data.weights "t2i=2,vid_recolor=0.5"``). Tuples are comma-separated,
dicts are ``key=value`` pairs joined by commas, booleans accept
true/false/1/0.
"""

from __future__ import annotations

import dataclasses
import json
import typing
from dataclasses import dataclass, field, fields, is_dataclass

from .codec import CodecConfig
from .errors import ConfigError
from .flow import SamplerConfig
from .model import ModelConfig
from .optim import OptimConfig
from .rope import RopeConfig
from .seqlayout import LayoutConfig
from .synthdata import IMAGE_TASKS, TASKS, VIDEO_EDIT_TASKS, VIDEO_GEN_TASKS


def _default_counts(n_img: int, n_vid: int) -> dict[str, int]:
    counts = {}
    for t in TASKS:
        counts[t] = n_img if t in IMAGE_TASKS else n_vid
    return counts


def _default_weights() -> dict[str, float]:
    weights = {}
    for t in TASKS:
        if t in IMAGE_TASKS:
            weights[t] = 2.0
        elif t in VIDEO_GEN_TASKS:
            weights[t] = 1.5
        else:
            weights[t] = 0.75
    return weights


@dataclass(frozen=True)
class DataConfig:
    canvas: int = 32
    frames: int = 8
    train_counts: dict[str, int] = field(default_factory=lambda: _default_counts(200, 64))
    val_counts: dict[str, int] = field(default_factory=lambda: _default_counts(8, 8))
    weights: dict[str, float] = field(default_factory=_default_weights)
    include_image: bool = True  # t2i + image editing tasks
    include_video_gen: bool = True  # t2v
    include_video_edit: bool = True  # video editing + propagation

    def included_tasks(self) -> list[str]:
        out = []
        for t in TASKS:
            if t in IMAGE_TASKS and not self.include_image:
                continue
            if t in VIDEO_GEN_TASKS and not self.include_video_gen:
                continue
            if t in VIDEO_EDIT_TASKS and not self.include_video_edit:
                continue
            out.append(t)
        return out


@dataclass(frozen=True)
class TrainConfig:
    token_budget: int = 1152
    checkpoint_every: int = 1000
    optim: OptimConfig = field(default_factory=OptimConfig)


@dataclass(frozen=True)
class AblateConfig:
    """Reduced-scale preset for the data-mix and design-ablation grids."""

    steps: int = 700
    canvas: int = 16
    frames: int = 4
    token_budget: int = 640
    peak_lr: float = 4e-3
    warmup_steps: int = 30
    train_counts: dict[str, int] = field(default_factory=lambda: _default_counts(160, 48))
    eval_samples: int = 12
    sampler_steps: int = 16
    success_edit_db: float = 14.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)
    codec: CodecConfig = field(default_factory=CodecConfig)
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    layout: LayoutConfig = field(default_factory=LayoutConfig)
    data: DataConfig = field(default_factory=DataConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    ablate: AblateConfig = field(default_factory=AblateConfig)

    def __post_init__(self):
        if self.model.vision_width != 4 * self.codec.c_vae:
            raise ConfigError(
                f"model.vision_width {self.model.vision_width} must equal 4 * codec.c_vae"
                f" = {4 * self.codec.c_vae}"
            )
        stride_h, stride_w = 2 * self.codec.r_h, 2 * self.codec.r_w
        if (self.layout.stride_h, self.layout.stride_w) != (stride_h, stride_w):
            raise ConfigError(
                f"layout strides {(self.layout.stride_h, self.layout.stride_w)} must be "
                f"(2*r_h, 2*r_w) = {(stride_h, stride_w)}"
            )


def to_dict(obj):
    if is_dataclass(obj):
        return {f.name: to_dict(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, dict):
        return {k: to_dict(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_dict(v) for v in obj]
    return obj


def _coerce(tp, value, path):
    origin = typing.get_origin(tp)
    if is_dataclass(tp):
        if not isinstance(value, dict):
            raise ConfigError(f"{path}: expected an object")
        return from_dict(tp, value, path)
    if origin is tuple:
        args = typing.get_args(tp)
        if len(args) == 2 and args[1] is Ellipsis:
            elem_types = [args[0]] * len(value)
        else:
            if len(value) != len(args):
                raise ConfigError(f"{path}: expected {len(args)} entries, got {len(value)}")
            elem_types = args
        return tuple(_coerce(a, v, f"{path}[{i}]") for i, (a, v) in enumerate(zip(elem_types, value)))
    if origin is dict:
        kt, vt = typing.get_args(tp)
        return {kt(k): _coerce(vt, v, f"{path}.{k}") for k, v in value.items()}
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{path}: expected a boolean, got {value!r}")
    if tp is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{path}: expected a number, got {value!r}")
        return float(value)
    if tp is str:
        return str(value)
    raise ConfigError(f"{path}: unsupported config field type {tp}")


def from_dict(cls, data: dict, path: str = "") -> object:
    hints = typing.get_type_hints(cls)
    kwargs = {}
    known = {f.name for f in fields(cls)}
    for key in data:
        if key not in known:
            raise ConfigError(f"unknown config key {path + '.' + key if path else key}")
    for f in fields(cls):
        if f.name in data:
            sub = f"{path}.{f.name}" if path else f.name
            kwargs[f.name] = _coerce(hints[f.name], data[f.name], sub)
    return cls(**kwargs)


def serialize(cfg: RunConfig) -> str:
    return json.dumps(to_dict(cfg), indent=2, sort_keys=True) + "\n"


def parse(text: str) -> RunConfig:
    return from_dict(RunConfig, json.loads(text))


def load(path: str) -> RunConfig:
    with open(path) as f:
        return parse(f.read())


def save(cfg: RunConfig, path: str) -> None:
    with open(path, "w") as f:
        f.write(serialize(cfg))


def _parse_leaf(tp, raw: str, path: str):
    origin = typing.get_origin(tp)
    if origin is tuple:
        args = typing.get_args(tp)
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        if len(args) == 2 and args[1] is Ellipsis:
            elem_types = [args[0]] * len(parts)
        else:
            if len(parts) != len(args):
                raise ConfigError(f"{path}: expected {len(args)} comma-separated values")
            elem_types = args
        return tuple(_parse_leaf(a, p, path) for a, p in zip(elem_types, parts))
    if origin is dict:
        kt, vt = typing.get_args(tp)
        out = {}
        for item in raw.split(","):
            if not item.strip():
                continue
            if "=" not in item:
                raise ConfigError(f"{path}: dict entries look like key=value, got {item!r}")
            k, v = item.split("=", 1)
            out[kt(k.strip())] = _parse_leaf(vt, v.strip(), path)
        return out
    if tp is bool:
        low = raw.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{path}: expected a boolean, got {raw!r}")
    if tp in (int, float):
        try:
            return tp(raw)
        except ValueError:
            raise ConfigError(f"{path}: expected {tp.__name__}, got {raw!r}") from None
    if tp is str:
        return raw
    raise ConfigError(f"{path}: cannot override non-leaf key")


def apply_overrides(cfg: RunConfig, pairs: list[tuple[str, str]]) -> RunConfig:
    """Return a new config with dotted-path leaves replaced by parsed values."""
    data = to_dict(cfg)
    for dotted, raw in pairs:
        keys = dotted.split(".")
        node = data
        cls = RunConfig
        for k in keys[:-1]:
            if not isinstance(node, dict) or k not in node:
                raise ConfigError(f"unknown config key {dotted}")
            node = node[k]
            hints = typing.get_type_hints(cls)
            if k not in hints or not is_dataclass(hints[k]):
                raise ConfigError(f"{dotted}: {k} is not a config section")
            cls = hints[k]
        leaf = keys[-1]
        hints = typing.get_type_hints(cls)
        if leaf not in hints:
            raise ConfigError(f"unknown config key {dotted}")
        parsed = _parse_leaf(hints[leaf], raw, dotted)
        node[leaf] = to_dict(parsed) if isinstance(parsed, tuple) else parsed
    return from_dict(RunConfig, data)
