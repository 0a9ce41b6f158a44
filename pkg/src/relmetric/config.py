"""Training configuration with the tuned defaults and a flat key=value file format."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import ConfigError


@dataclass
class TrainConfig:
    learning_rate: float = 0.005
    dropout: float = 0.5
    epochs: int = 100
    channels: int = 15          # kappa
    layers: int = 8             # lambda
    char_dim: int = 25          # pi
    char_features: int = 50     # eta
    position_dim: int = 25      # gamma
    dep_dim: int = 10           # beta
    word_dim: int = 200         # delta
    context_dim: int = 200      # rho
    window: int = 3
    batch_size: int = 1
    bucket_by_length: bool = False
    batch_norm: bool = True
    word_grad_scale: float = 1.0
    rmsprop_decay: float = 0.9
    rmsprop_eps: float = 1e-8
    lr_halving_epochs: float = 10.0
    seed: int = 0
    dtype: str = "float64"
    word_embeddings: Optional[str] = None

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("learning_rate", "epochs", "channels", "layers", "char_dim", "char_features",
                    "position_dim", "dep_dim", "word_dim", "context_dim", "batch_size", "lr_halving_epochs")
        for name in positive:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.layers < 2:
            raise ConfigError(f"layers must be >= 2, got {self.layers}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")
        if self.context_dim % 2:
            raise ConfigError(f"context_dim must be even, got {self.context_dim}")
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigError(f"window must be odd and >= 3, got {self.window}")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, values: Mapping[str, Any]) -> "TrainConfig":
        unknown = set(values) - set(cls.keys())
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}; valid keys: {', '.join(cls.keys())}")
        return cls(**{k: coerce(k, v) for k, v in values.items()})

    def replace(self, **overrides) -> "TrainConfig":
        merged = self.to_dict()
        merged.update(overrides)
        return TrainConfig.from_dict(merged)


_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def coerce(key: str, value: Any) -> Any:
    kind = _TYPES[key]
    if value is None:
        return None
    if not isinstance(value, str):
        return value
    text = value.strip()
    if kind == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {value!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: {exc}") from exc
    if kind == "Optional[str]" and text.lower() in ("", "none", "null"):
        return None
    return text


def read_config_file(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment."""
    values = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _TYPES:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}; valid keys: {', '.join(TrainConfig.keys())}")
        values[key] = value
    return values


def write_config_file(path, config: TrainConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in config.to_dict().items():
            fh.write(f"{key} = {'none' if value is None else value}\n")


def load_config(path=None, overrides: Optional[Mapping[str, Any]] = None) -> TrainConfig:
    """Defaults, then file values, then explicit overrides."""
    values: dict[str, Any] = {}
    if path is not None:
        values.update(read_config_file(path))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    return TrainConfig.from_dict(values)


def config_json(config: TrainConfig) -> str:
    return json.dumps(config.to_dict(), sort_keys=True)
