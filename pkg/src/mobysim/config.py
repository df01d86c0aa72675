"""Flat ``key = value`` experiment configuration files.

Unspecified keys keep the defaults of :class:`RunConfig` and
:class:`ExperimentConfig` (300 sampled users, 100 sources, 5 connections of
one bundle each, 1 s step, 45 days, 5 runs). Example::

    # reduction.cfg
    trace = dartmouth.csv
    experiment = reduction
    l = 1,2,3
    duration = 15d
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, fields, replace

from .engine import EXPERIMENT_KINDS, ExperimentConfig, RunConfig
from .routing import POLICIES


class ConfigError(ValueError):
    pass


_UNITS = {"s": 1, "m": 60, "h": 3600, "d": 86_400}


def parse_duration(text: str) -> int:
    """``"45d"``, ``"36h"``, ``"90m"`` or plain seconds."""
    m = re.fullmatch(r"\s*(\d+(?:\.\d+)?)\s*([smhd]?)\s*", text)
    if not m:
        raise ValueError(f"not a duration: {text!r}")
    return int(round(float(m.group(1)) * _UNITS[m.group(2) or "s"]))


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _policies(text: str) -> tuple[str, ...]:
    names = tuple(x.strip() for x in text.split(",") if x.strip())
    bad = [n for n in names if n not in POLICIES]
    if bad:
        raise ValueError(f"unknown policy {bad[0]!r} (choose from {', '.join(POLICIES)})")
    return names


def _policy(text: str) -> str:
    names = _policies(text)
    if len(names) != 1:
        raise ValueError("give exactly one policy (use 'policies' for several)")
    return names[0]


def _bins(text: str) -> tuple[tuple[float, float], ...]:
    out = []
    for part in text.split(","):
        lo, hi = part.split("-")
        out.append((float(lo), float(hi)))
    return tuple(out)


def _window(text: str) -> tuple[int, int]:
    a, b = text.split(",")
    return parse_duration(a), parse_duration(b)


def _optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none", "full") else int(text)


def _kind(text: str) -> str:
    if text not in EXPERIMENT_KINDS:
        raise ValueError(f"unknown experiment {text!r} (choose from {', '.join(EXPERIMENT_KINDS)})")
    return text


_RUN_KEYS = {
    "policy": _policy,
    "sampled_users": int,
    "traffic_sources": int,
    "connections_per_source": int,
    "bundles_per_connection": int,
    "time_step": parse_duration,
    "duration": parse_duration,
    "seed": int,
    "pattern_window": _window,
    "truncation": _optional_int,
}
_EXPERIMENT_KEYS = {
    "policies": ("policies", _policies),
    "runs": ("runs", int),
    "experiment": ("experiment", _kind),
    "selection": ("selection", str),
    "entropy_bins": ("entropy_bins", _bins),
    "l": ("levels", _ints),
    "levels": ("levels", _ints),
    "learning_days": ("learning_days", int),
    "routing_days": ("routing_days", int),
    "cdf_bins": ("cdf_bins", int),
    "confidence": ("level", float),
}


@dataclass(frozen=True)
class LoadedConfig:
    experiment: ExperimentConfig
    trace: str | None = None  # resolved relative to the config file


def parse_config(text: str, base_dir: str = ".") -> LoadedConfig:
    run_kw, exp_kw, trace = {}, {}, None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            if key == "trace":
                trace = value if os.path.isabs(value) else os.path.join(base_dir, value)
            elif key in _RUN_KEYS:
                run_kw[key] = _RUN_KEYS[key](value)
            elif key in _EXPERIMENT_KEYS:
                name, parse = _EXPERIMENT_KEYS[key]
                exp_kw[name] = parse(value)
            else:
                known = sorted([*_RUN_KEYS, *_EXPERIMENT_KEYS, "trace"])
                raise ConfigError(f"line {lineno}: unknown key {key!r} (known: {', '.join(known)})")
        except ConfigError:
            raise
        except ValueError as exc:
            raise ConfigError(f"line {lineno}: bad value for {key!r}: {exc}") from None
    try:
        cfg = ExperimentConfig(run=RunConfig(**run_kw), **exp_kw)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return LoadedConfig(cfg, trace)


def load_config(path: str | os.PathLike) -> LoadedConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), os.path.dirname(os.path.abspath(path)))


def with_overrides(cfg: ExperimentConfig, **run_overrides) -> ExperimentConfig:
    run_fields = {f.name for f in fields(RunConfig)}
    run_kw = {k: v for k, v in run_overrides.items() if k in run_fields and v is not None}
    exp_kw = {k: v for k, v in run_overrides.items() if k not in run_fields and v is not None}
    return replace(cfg, run=replace(cfg.run, **run_kw), **exp_kw)
