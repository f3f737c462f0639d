"""Flat ``key = value`` text files used for calibration, reports and CLI config."""

from __future__ import annotations

from typing import Mapping

from .errors import ConfigError


def parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw!r}")
        out[key.strip()] = value.strip()
    return out


def _fmt(value: object) -> str:
    if isinstance(value, float):
        return repr(value)
    return str(value)


def format_kv(items: Mapping[str, object]) -> str:
    return "".join(f"{k} = {_fmt(v)}\n" for k, v in items.items())
