"""Configuration dataclasses and their plain ``key=value`` text form."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, field
from pathlib import Path

DEFAULT_RESOLUTIONS = (2048, 512, 128)
DEFAULT_CHANNELS = (32, 128, 256, 512)
LOSS_WEIGHTS = (0.02, 0.04, 0.08, 0.16)


class ConfigError(ValueError):
    pass


class ResolutionError(ValueError):
    pass


def default_k(sampler: str) -> int:
    return 16 if sampler == "fps" else 20


@dataclass(frozen=True)
class ScaleConfig:
    resolutions: tuple[int, int, int] = DEFAULT_RESOLUTIONS
    channels: tuple[int, int, int, int] = DEFAULT_CHANNELS
    k_neighbors: int = 20
    sampler: str = "rs"
    include_absolute_xyz: bool = False
    lfa_mid_ratio: float = 0.5

    def __post_init__(self):
        l1, l2, l3 = self.resolutions
        if not l1 > l2 > l3 >= 1:
            raise ConfigError(f"resolutions must decrease strictly: {self.resolutions}")
        c = self.channels
        if len(c) != 4 or not c[0] < c[1] < c[2] < c[3]:
            raise ConfigError(f"channels must increase strictly: {c}")
        if self.sampler not in ("rs", "fps"):
            raise ConfigError(f"sampler must be rs or fps, got {self.sampler!r}")
        if self.k_neighbors < 1 or self.k_neighbors > l3:
            raise ConfigError(f"K_p={self.k_neighbors} must lie in [1, l3={l3}]")

    @classmethod
    def for_sampler(cls, sampler: str, **kw) -> "ScaleConfig":
        kw.setdefault("k_neighbors", default_k(sampler))
        return cls(sampler=sampler, **kw)

    def replace(self, **kw) -> "ScaleConfig":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class ModelConfig:
    scales: ScaleConfig = field(default_factory=ScaleConfig)
    edge_only: bool = False
    enable_embed2: bool = True
    bidirectional: bool = True
    residual_heads: bool = False
    l0_head: bool = True
    head_widths: tuple[int, int] = (64, 32)

    def replace(self, **kw) -> "ModelConfig":
        scale_kw = {k: kw.pop(k) for k in list(kw) if k in _SCALE_KEYS}
        cfg = dataclasses.replace(self, **kw)
        if scale_kw:
            cfg = dataclasses.replace(cfg, scales=cfg.scales.replace(**scale_kw))
        return cfg

    def architecture_key(self) -> dict:
        """Fields that determine parameter shapes (checked on checkpoint load)."""
        return {
            "channels": self.scales.channels,
            "include_absolute_xyz": self.scales.include_absolute_xyz,
            "lfa_mid_ratio": self.scales.lfa_mid_ratio,
            "edge_only": self.edge_only,
            "enable_embed2": self.enable_embed2,
            "l0_head": self.l0_head,
            "head_widths": self.head_widths,
        }


@dataclass(frozen=True)
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    epochs: int = 1
    batch_size: int = 1
    lr0: float = 1e-3
    decay_rate: float = 0.8
    decay_interval: int = 0  # 0 -> 20 epochs for FPS, 60 for RS
    max_iters: int = 0  # 0 -> no cap
    augment: bool = True
    augment_rotation_deg: float = 2.0
    augment_translation: float = 0.2
    train_points: int = 0  # 0 -> keep every point
    seed: int = 0
    checkpoint_every: int = 0  # epochs; 0 -> only at the end
    data_dir: str = ""
    synthetic_spec: str = ""
    num_scenes: int = 10

    def __post_init__(self):
        if self.batch_size != 1:
            raise ConfigError("only batch size 1 is supported")
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")

    @property
    def interval(self) -> int:
        if self.decay_interval > 0:
            return self.decay_interval
        return 20 if self.model.scales.sampler == "fps" else 60

    def lr_at(self, epoch: int) -> float:
        return self.lr0 * self.decay_rate ** (epoch // self.interval)


_SCALE_KEYS = {f.name for f in dataclasses.fields(ScaleConfig)}


# --- key=value text ---------------------------------------------------------


def _convert(raw: str, hint, key: str):
    origin = typing.get_origin(hint)
    try:
        if hint is bool:
            low = raw.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if hint is int:
            return int(raw)
        if hint is float:
            return float(raw)
        if hint is str:
            return raw.strip()
        if origin is tuple:
            (elem, *_rest) = typing.get_args(hint)
            return tuple(_convert(p, elem, key) for p in raw.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {raw!r}") from None
    raise ConfigError(f"{key}: unsupported type {hint}")


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def from_kv(cls, values: dict[str, str]):
    """Build ``cls`` from flat ``key=value`` pairs; nested configs share the namespace."""
    hints = typing.get_type_hints(cls)
    kwargs = {}
    used = set()
    for f in dataclasses.fields(cls):
        hint = hints[f.name]
        if dataclasses.is_dataclass(hint):
            kwargs[f.name], sub_used = from_kv(hint, values)
            used |= sub_used
        elif f.name in values:
            kwargs[f.name] = _convert(values[f.name], hint, f.name)
            used.add(f.name)
    if cls is ScaleConfig and "k_neighbors" not in kwargs:
        kwargs["k_neighbors"] = default_k(kwargs.get("sampler", "rs"))
    return cls(**kwargs), used


def to_kv(obj) -> str:
    lines = []
    for f in dataclasses.fields(obj):
        value = getattr(obj, f.name)
        if dataclasses.is_dataclass(value):
            lines.append(to_kv(value).rstrip("\n"))
        else:
            lines.append(f"{f.name}={_format(value)}")
    return "\n".join(lines) + "\n"


def load_config(cls, path: str | Path):
    values = parse_kv(Path(path).read_text(encoding="utf-8"))
    obj, used = from_kv(cls, values)
    unknown = set(values) - used
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    return obj
