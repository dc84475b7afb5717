"""Flat key=value run configuration files.

Lines are `key = value`; `#` starts a comment; blank lines are skipped.
Values stay strings until a typed getter is asked for them.
"""

from __future__ import annotations

from deformsynth.errors import ConfigError


def parse_config(path) -> dict:
    cfg: dict = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            if "=" not in body:
                raise ConfigError(f"{path}:{line_no}: expected key=value, got {body!r}")
            key, value = body.split("=", 1)
            key = key.strip()
            if not key:
                raise ConfigError(f"{path}:{line_no}: empty key")
            cfg[key] = value.strip()
    return cfg


def write_config(path, cfg: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key in sorted(cfg):
            fh.write(f"{key} = {cfg[key]}\n")


def get_int(cfg: dict, key: str, default: int) -> int:
    if key not in cfg:
        return default
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected integer, got {cfg[key]!r}") from exc


def get_float(cfg: dict, key: str, default: float) -> float:
    if key not in cfg:
        return default
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigError(f"{key}: expected float, got {cfg[key]!r}") from exc


def get_str(cfg: dict, key: str, default: str) -> str:
    return cfg.get(key, default)


def get_bool(cfg: dict, key: str, default: bool) -> bool:
    if key not in cfg:
        return default
    val = cfg[key].lower()
    if val in ("1", "true", "yes", "on"):
        return True
    if val in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected boolean, got {cfg[key]!r}")
