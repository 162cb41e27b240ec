"""Flat ``key = value`` run configuration files.

Allowed keys are the TrainConfig and ModelConfig field names, plus the
synthesis keys (``subjects``, ``duration_s``, ``sample_rate_hz``) and the
classifier thresholds. Anything else is rejected with the key named.
"""
from __future__ import annotations

from dataclasses import MISSING, fields
from pathlib import Path

from .errors import ConfigError, IOFailure
from .events import ClassifierParams
from .models import ModelConfig
from .training import TrainConfig

SYNTH_KEYS = {"subjects": 8, "duration_s": 120.0, "sample_rate_hz": 90.0}

_BOOL = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def _defaults(cls) -> dict:
    out = {}
    for f in fields(cls):
        out[f.name] = None if f.default is MISSING else f.default
    return out


KNOWN_KEYS: dict[str, tuple[str, object]] = {}
for _owner, _cls in (("train", TrainConfig), ("model", ModelConfig),
                     ("classifier", ClassifierParams)):
    for _k, _v in _defaults(_cls).items():
        KNOWN_KEYS[_k] = (_owner, _v)
for _k, _v in SYNTH_KEYS.items():
    KNOWN_KEYS[_k] = ("synth", _v)

_STRING_KEYS = {"arch", "feature_set"}
_INT_KEYS = {"window_len", "n_layers", "subjects"}


def coerce(key: str, text: str):
    """Convert the text of one value to the type of the key's default."""
    if key not in KNOWN_KEYS:
        raise ConfigError(f"unknown config key {key!r}")
    default = KNOWN_KEYS[key][1]
    s = text.strip()
    try:
        if key in _STRING_KEYS:
            return s.upper()
        if key == "tcn_dilations":
            return tuple(int(p) for p in s.replace("(", "").replace(")", "").split(",") if p.strip())
        if isinstance(default, bool):
            if s.lower() not in _BOOL:
                raise ValueError(s)
            return _BOOL[s.lower()]
        if key in _INT_KEYS or isinstance(default, int):
            return int(s)
        if isinstance(default, float):
            return float(s)
    except ValueError:
        raise ConfigError(f"bad value {text.strip()!r} for config key {key!r}") from None
    return s


def parse_config_text(text: str, source: str = "<config>") -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown config key {key!r}")
        if key in out:
            raise ConfigError(f"{source}:{lineno}: duplicate config key {key!r}")
        out[key] = coerce(key, value)
    return out


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise IOFailure(f"cannot read config {p}: {exc.strerror}") from None
    return parse_config_text(text, str(p))


def split_config(cfg: dict) -> dict[str, dict]:
    """Group merged keys by owner: train, model, classifier, synth."""
    out = {"train": {}, "model": {}, "classifier": {}, "synth": {}}
    for k, v in cfg.items():
        out[KNOWN_KEYS[k][0]][k] = v
    return out


def format_config(cfg: dict) -> str:
    lines = []
    for k in sorted(cfg):
        v = cfg[k]
        if isinstance(v, (tuple, list)):
            v = ",".join(str(x) for x in v)
        elif hasattr(v, "value"):
            v = v.value
        lines.append(f"{k} = {v}")
    return "\n".join(lines) + "\n"
