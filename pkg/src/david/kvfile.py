"""Flat ``key = value`` text files (configs, checkpoint sidecars).

Lines starting with ``#`` and blank lines are ignored. Values are kept as
strings; callers convert them.
"""

from __future__ import annotations

from pathlib import Path

from .errors import ConfigError


def write_kv(path, items: dict, header: str = "") -> None:
    lines = [f"# {line}" for line in header.splitlines()] if header else []
    for key, value in items.items():
        text = str(value)
        if "\n" in text:
            raise ConfigError(f"value for {key!r} spans lines")
        lines.append(f"{key} = {text}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_kv(path) -> dict:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"no such config file: {path}")
    out = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def parse_bool(text: str) -> bool:
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


def parse_optional(text: str, conv):
    t = str(text).strip()
    return None if t.lower() in ("", "none", "auto") else conv(t)
