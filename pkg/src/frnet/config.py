"""Run configuration and the flat ``key = value`` config-file format."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .refinement import resolve_variant


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 4096
    dropout: float = 0.5
    embed_dim: int = 20
    attention_dim: int = 0  # 0 -> same as embed_dim
    cie_hidden: tuple[int, ...] = (128,)
    scheduler_factor: float = 0.1
    scheduler_patience: int = 4
    scheduler_metric: str = "auc"
    min_delta: float = 1e-5
    early_stop_patience: int = 5
    max_epochs: int = 100
    seed: int = 0
    variant: str = "frnet"
    precision: str = "float32"
    init: str = "xavier"
    min_feature_count: int = 1
    deterministic: bool = False

    def __post_init__(self):
        self.validate()

    @property
    def attn_dim(self) -> int:
        return self.attention_dim or self.embed_dim

    @property
    def variant_id(self) -> int:
        return resolve_variant(self.variant)

    def validate(self) -> None:
        for name in ("lr", "batch_size", "embed_dim", "scheduler_factor", "min_feature_count"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("scheduler_patience", "early_stop_patience"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if self.max_epochs < 0 or self.attention_dim < 0 or self.min_delta < 0:
            raise ConfigError("max_epochs, attention_dim and min_delta must be non-negative")
        if not 0 <= self.dropout < 1:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if any(h <= 0 for h in self.cie_hidden):
            raise ConfigError(f"cie_hidden widths must be positive, got {self.cie_hidden}")
        if self.scheduler_metric not in ("auc", "logloss"):
            raise ConfigError(f"scheduler_metric must be auc or logloss, got {self.scheduler_metric!r}")
        if self.precision not in ("float32", "float64"):
            raise ConfigError(f"precision must be float32 or float64, got {self.precision!r}")
        if self.init not in ("xavier", "normal"):
            raise ConfigError(f"init must be xavier or normal, got {self.init!r}")
        try:
            resolve_variant(self.variant)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def items(self) -> list[tuple[str, str]]:
        return [(f.name, format_value(getattr(self, f.name))) for f in dataclasses.fields(self)]


def format_value(v: Any) -> str:
    if isinstance(v, tuple):
        return ",".join(str(x) for x in v)
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def parse_value(name: str, text: str) -> Any:
    fields = {f.name: f for f in dataclasses.fields(TrainConfig)}
    if name not in fields:
        raise ConfigError(f"unknown config key {name!r}")
    default = fields[name].default if fields[name].default is not dataclasses.MISSING else None
    text = text.strip()
    try:
        if name == "cie_hidden":
            return tuple(int(x) for x in text.replace(" ", "").split(",") if x)
        if isinstance(default, bool):
            if text.lower() in ("1", "true", "yes", "on"):
                return True
            if text.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {name}: {text!r}") from None
    return text


def parse_config_text(text: str, source: str = "<config>") -> dict[str, Any]:
    values: dict[str, Any] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        values[key] = parse_value(key, value)
    return values


def load_config(path: Path | str | None = None, **overrides) -> TrainConfig:
    """File values first, then non-``None`` overrides on top."""
    values: dict[str, Any] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(encoding="utf-8"), str(path)))
    values.update({k: v for k, v in overrides.items() if v is not None})
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def config_to_text(config: TrainConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in config.items())
