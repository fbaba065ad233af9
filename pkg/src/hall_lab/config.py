"""Experiment configuration: JSON files checked against a published schema.

Precedence is command-line override > file > scenario default.  Unknown
keys are rejected at every level.
"""

from __future__ import annotations

import copy
import json
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .errors import ConfigurationError


@lru_cache(maxsize=None)
def load_schema(name: str = "config") -> dict:
    text = resources.files("hall_lab").joinpath("schema", f"{name}.schema.json").read_text()
    return json.loads(text)


def schema_errors(cfg, name: str = "config") -> list[str]:
    """Human-readable schema violations, each prefixed by the offending key path."""
    validator = jsonschema.Draft202012Validator(load_schema(name))
    out = []
    for err in sorted(validator.iter_errors(cfg), key=lambda e: [str(p) for p in e.absolute_path]):
        where = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(f"{where}: {err.message}")
    return out


def check(cfg, name: str = "config") -> None:
    errs = schema_errors(cfg, name)
    if errs:
        raise ConfigurationError("invalid configuration:\n  " + "\n  ".join(errs))


def read_config(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"{path}: not valid JSON ({exc})") from exc
    except OSError as exc:
        raise ConfigurationError(f"cannot read {path}: {exc.strerror}") from exc
    check(cfg)
    return cfg


def parse_override(text: str) -> tuple[list[str], object]:
    """``"model.L=5"`` -> ``(["model", "L"], 5)``; the value is JSON if it parses, else a string."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not of the form key=value")
    key, raw = text.split("=", 1)
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigurationError(f"override key {key!r} is malformed")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return parts, value


def apply_overrides(cfg: dict, overrides) -> dict:
    out = copy.deepcopy(cfg)
    for text in overrides or ():
        parts, value = parse_override(text)
        node = out
        for p in parts[:-1]:
            nxt = node.setdefault(p, {})
            if not isinstance(nxt, dict):
                raise ConfigurationError(f"override {text!r} descends into non-object key {p!r}")
            node = nxt
        node[parts[-1]] = value
    return out


def deep_merge(base: dict, top: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in top.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve(cfg: dict, overrides=()) -> dict:
    """Validated config with overrides applied and scenario defaults filled in."""
    from .scenarios import SCENARIOS

    check(cfg)
    cfg = apply_overrides(cfg, overrides)
    check(cfg)
    merged = deep_merge(SCENARIOS[cfg["scenario"]].defaults, cfg)
    check(merged)
    return merged
