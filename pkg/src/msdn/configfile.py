"""Flat key=value configuration files.

One ``key = value`` pair per line; blank lines and ``#`` comments are
ignored.  Keys mirror dataclass field names, so any config dataclass can
be round-tripped through text.
"""

from __future__ import annotations

import dataclasses
import typing
from pathlib import Path

from .errors import ArgumentError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def parse_kv_file(path: str | Path) -> dict[str, str]:
    """Read a key=value file into a string-to-string mapping."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ArgumentError(f"{path}:{lineno}: empty key")
        if key in out:
            raise ArgumentError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def _convert(value: str, target: type, key: str):
    if target is bool:
        lowered = value.lower()
        if lowered in _TRUE:
            return True
        if lowered in _FALSE:
            return False
        raise ArgumentError(f"config key {key!r}: expected a boolean, got {value!r}")
    try:
        return target(value)
    except ValueError as exc:
        raise ArgumentError(
            f"config key {key!r}: cannot parse {value!r} as {target.__name__}"
        ) from exc


def dataclass_from_kv(cls, pairs: dict[str, str]):
    """Build a config dataclass from string pairs, rejecting unknown keys."""
    hints = typing.get_type_hints(cls)
    fields = {f.name: hints[f.name] for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in pairs.items():
        if key not in fields:
            raise ArgumentError(
                f"unknown config key {key!r} (valid: {', '.join(sorted(fields))})"
            )
        kwargs[key] = _convert(value, fields[key], key)
    return cls(**kwargs)


def format_kv(obj) -> str:
    """Serialize a config dataclass as one key=value pair per line."""
    lines = [
        f"{f.name} = {getattr(obj, f.name)}" for f in dataclasses.fields(obj)
    ]
    return "\n".join(lines) + "\n"
