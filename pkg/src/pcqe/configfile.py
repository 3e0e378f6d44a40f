"""Flat key=value training configuration files.

One `key = value` per line, `#` starts a comment. Keys are the training
and network hyperparameter names; anything unknown is an error so typos
cannot silently fall back to defaults.
"""

from __future__ import annotations

from dataclasses import fields

from .errors import ConfigError
from .network import NetConfig
from .train import TrainConfig

_TRAIN_FIELDS = {f.name: f for f in fields(TrainConfig) if f.name != "net"}
_NET_FIELDS = {f.name: f for f in fields(NetConfig)}
# Patch geometry lives on TrainConfig; the net copy is derived from it.
_NET_ONLY = {k: v for k, v in _NET_FIELDS.items() if k not in _TRAIN_FIELDS}
_EXTRA_KEYS = {"pairs"}  # path to a TSV of clean/distorted files, used by the CLI


def parse_config_lines(lines) -> dict[str, str]:
    values = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value, got {line!r}")
        key, _, value = line.partition("=")
        key, value = key.strip(), value.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value
    return values


def _convert(key: str, value: str, target_type):
    try:
        if target_type is bool or target_type == "bool":
            lowered = value.lower()
            if lowered in ("true", "yes", "1", "on"):
                return True
            if lowered in ("false", "no", "0", "off"):
                return False
            raise ValueError(value)
        if target_type is int:
            return int(value)
        if target_type is float:
            return float(value)
        return value
    except ValueError as exc:
        raise ConfigError(f"key {key!r}: cannot parse {value!r}") from exc


def _field_type(field):
    # Fields are annotated with plain types or "X | None" strings.
    ann = field.type if isinstance(field.type, str) else getattr(field.type, "__name__", "str")
    for candidate, typ in (("bool", bool), ("int", int), ("float", float)):
        if ann.startswith(candidate):
            return typ
    return str


def load_train_config(path) -> tuple[TrainConfig, str | None]:
    """Build a TrainConfig from a file; returns (config, pairs path)."""
    with open(path) as fh:
        raw = parse_config_lines(fh)
    train_kwargs, net_kwargs, pairs = {}, {}, None
    for key, value in raw.items():
        if key in _TRAIN_FIELDS:
            train_kwargs[key] = _convert(key, value, _field_type(_TRAIN_FIELDS[key]))
        elif key in _NET_ONLY:
            net_kwargs[key] = _convert(key, value, _field_type(_NET_ONLY[key]))
        elif key == "pairs":
            pairs = value
        else:
            raise ConfigError(f"unknown config key {key!r}")
    cfg = TrainConfig(net=NetConfig(**net_kwargs), **train_kwargs)
    return cfg, pairs
