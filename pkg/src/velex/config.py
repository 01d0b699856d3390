"""Configuration dataclasses and a small sectioned key=value file parser."""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    vocab_size: int
    dim: int = 32
    heads: int = 1
    ffn_mult: int = 4
    region_feat_dim: int = 12
    max_text_positions: int = 24
    max_gen_positions: int = 40
    backbone_layers: int = 4
    within_layers: int = 3
    cross_layers: int = 6
    xmodal_layers: int = 3
    inferrer_layers: int = 3
    decoder_layers: int = 2
    n_relations: int = 3
    use_bias: bool = True
    dropout: float = 0.0
    init_seed: int = 0

    def __post_init__(self):
        if self.dim % self.heads != 0:
            raise ConfigError("dim must be divisible by heads")
        if self.dropout < 0 or self.dropout >= 1:
            raise ConfigError("dropout must be in [0, 1)")


@dataclass
class TrainConfig:
    lr: float = 1e-5
    csi_lr: float | None = None
    batch_size: int = 16
    max_epochs: int = 50
    patience: int = 5
    decay: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.batch_size < 1 or self.max_epochs < 0:
            raise ConfigError("batch_size must be >= 1 and max_epochs >= 0")


@dataclass
class DecodeConfig:
    beam: int = 5
    sample_size: int | None = None
    top_k: int = 32
    max_len: int = 16
    lam: float = 0.86
    seed: int = 0

    def __post_init__(self):
        if self.beam < 1:
            raise ConfigError("beam size must be >= 1")
        if self.sample_size is not None and self.sample_size < 1:
            raise ConfigError("sample size must be >= 1")
        if self.top_k < 1:
            raise ConfigError("top_k must be >= 1")
        if not (0.0 < self.lam <= 1.0):
            raise ConfigError("lambda must be in (0, 1]")

    @property
    def samples(self) -> int:
        return self.sample_size if self.sample_size is not None else self.beam


@dataclass
class DataConfig:
    pretrain_size: int = 2000
    train_size: int = 2000
    val_size: int = 300
    test_size: int = 300
    region_feat_dim: int = 12
    min_regions: int = 3
    max_regions: int = 5
    feature_noise: float = 0.05
    seed: int = 0

    def __post_init__(self):
        for name in ("pretrain_size", "train_size", "val_size", "test_size"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")
        if not (1 <= self.min_regions <= self.max_regions):
            raise ConfigError("need 1 <= min_regions <= max_regions")


def _parse_value(raw: str) -> Any:
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    if low in ("none", "null"):
        return None
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        pass
    return raw


def parse_config_text(text: str) -> dict[str, dict[str, Any]]:
    """Parse `[section]` / `key = value` text into nested dicts."""
    sections: dict[str, dict[str, Any]] = {}
    current: dict[str, Any] | None = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if stripped.startswith("[") and stripped.endswith("]"):
            name = stripped[1:-1].strip()
            if not name:
                raise ConfigError(f"line {lineno}: empty section name")
            current = sections.setdefault(name, {})
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected key = value, got {stripped!r}")
        if current is None:
            raise ConfigError(f"line {lineno}: key outside any [section]")
        key, _, value = stripped.partition("=")
        current[key.strip()] = _parse_value(value)
    return sections


def load_config_file(path: str | Path) -> dict[str, dict[str, Any]]:
    return parse_config_text(Path(path).read_text(encoding="utf-8"))


def _from_mapping(cls, mapping: dict[str, Any], **extra):
    known = {f.name for f in fields(cls)}
    unknown = set(mapping) - known
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    merged = {**mapping, **extra}
    return cls(**merged)


def model_config_from(mapping: dict[str, Any], vocab_size: int) -> ModelConfig:
    mapping = {k: v for k, v in mapping.items() if k != "vocab_size"}
    return _from_mapping(ModelConfig, mapping, vocab_size=vocab_size)


def train_config_from(mapping: dict[str, Any]) -> TrainConfig:
    return _from_mapping(TrainConfig, mapping)


def decode_config_from(mapping: dict[str, Any]) -> DecodeConfig:
    return _from_mapping(DecodeConfig, mapping)


def data_config_from(mapping: dict[str, Any]) -> DataConfig:
    return _from_mapping(DataConfig, mapping)
