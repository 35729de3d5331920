"""Flat ``key = value`` experiment config files.

Blank lines and ``#`` comments are ignored; list values are comma-separated.
"""

from __future__ import annotations

import typing
from dataclasses import fields
from pathlib import Path

from .experiment import ExperimentConfig


class ConfigError(ValueError):
    pass


def _convert(raw: str, kind):
    origin = typing.get_origin(kind)
    if origin is list:
        (item,) = typing.get_args(kind)
        return [_convert(part.strip(), item) for part in raw.split(",") if part.strip()]
    if kind is int:
        return int(float(raw)) if "e" in raw.lower() else int(raw)
    if kind is float:
        return float(raw)
    return raw


def parse_config(text: str) -> ExperimentConfig:
    hints = typing.get_type_hints(ExperimentConfig)
    known = {f.name for f in fields(ExperimentConfig)}
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, raw = (part.strip() for part in line.split("=", 1))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = _convert(raw, hints[key])
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key}: {exc}") from None
    try:
        return ExperimentConfig(**values)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_config(text)
