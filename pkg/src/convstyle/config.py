"""Run configuration files.

A config file is UTF-8 JSON, either nested ({"training": {"seed": 1}})
or flat with dotted keys ({"training.seed": 1}), but not a mix of both.
Unknown keys are errors: silent typos in experiment configs are the
classic footgun.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import ConfigError
from .features import FeatureConfig
from .model import ModelConfig, Variant
from .synthetic import SynthConfig
from .training import TrainConfig

_SECTIONS = {
    "features": FeatureConfig,
    "model": ModelConfig,
    "training": TrainConfig,
    "synth": SynthConfig,
}


@dataclass
class RunConfig:
    features: FeatureConfig = field(default_factory=FeatureConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    training: TrainConfig = field(default_factory=TrainConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def validate(self) -> None:
        self.features.validate()
        self.model.validate()
        self.training.validate()
        self.synth.validate()


def _coerce(section: str, key: str, value, expected_type):
    if expected_type is Variant:
        if isinstance(value, str):
            return Variant.from_name(value)
        raise ConfigError(f"{section}.{key}: expected a variant name string")
    if expected_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{section}.{key}: expected a number, got {value!r}")
        return float(value)
    if expected_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{section}.{key}: expected an integer, got {value!r}")
        return value
    if expected_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{section}.{key}: expected a string, got {value!r}")
        return value
    raise ConfigError(f"{section}.{key}: unsupported config type")  # pragma: no cover


def _apply(cfg: RunConfig, section: str, key: str, value) -> None:
    if section not in _SECTIONS:
        raise ConfigError(f"unknown config section {section!r}")
    target = getattr(cfg, section)
    known = {f.name: f.type for f in fields(target)}
    if key not in known:
        raise ConfigError(f"unknown config key {section}.{key}")
    current = getattr(target, key)
    expected = Variant if isinstance(current, Variant) else type(current)
    setattr(target, key, _coerce(section, key, value, expected))


def parse_config(obj: dict) -> RunConfig:
    """Build a RunConfig from a parsed JSON object."""
    if not isinstance(obj, dict):
        raise ConfigError("config root must be a JSON object")
    dotted = [k for k in obj if "." in k]
    nested = [k for k in obj if "." not in k]
    if dotted and nested:
        raise ConfigError(
            "config mixes dotted keys with nested sections; use one style")
    cfg = RunConfig()
    if dotted:
        for key, value in obj.items():
            section, _, name = key.partition(".")
            if not name or "." in name:
                raise ConfigError(f"malformed config key {key!r}")
            _apply(cfg, section, name, value)
    else:
        for section, body in obj.items():
            if not isinstance(body, dict):
                raise ConfigError(f"config section {section!r} must be an object")
            for key, value in body.items():
                if "." in key:
                    raise ConfigError(
                        f"dotted key {key!r} not allowed inside nested section "
                        f"{section!r}")
                _apply(cfg, section, key, value)
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> RunConfig:
    """Load and validate a JSON config file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    return parse_config(obj)
