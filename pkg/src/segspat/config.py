"""YAML run configuration with embedded defaults.

Relative file paths are resolved against the directory of the config file.
"""

from __future__ import annotations

import copy
import dataclasses
from pathlib import Path

import yaml

from .errors import InputError
from .model import ModelSpec, PriorConfig
from .panel import DEFAULT_SCHEMA
from .sampler import SamplerConfig
from .scan import ScanGrid
from .synthetic import SynthConfig

__all__ = ["DEFAULTS", "load_config", "default_config_text", "model_spec", "sampler_config", "scan_grid", "synth_config"]

DEFAULTS = {
    "data": {
        "path": None,
        "adjacency": None,
        "delimiter": ",",
        "fill_gaps": False,
        "strict_adjacency": False,
        "columns": dict(DEFAULT_SCHEMA),
    },
    "model": {
        "outcome": "incidence",
        "threshold_c": 50.0,
        "lag": 7,
        "spline_df": 16,
        "random_slope": False,
        "spatial": True,
    },
    "priors": {"fixed_effect_variance": 1.0e6, "precision_shape": 1.0, "precision_rate": 5.0e-5},
    "sampler": {"n_chains": 4, "n_iterations": 5000, "n_burnin": 2500, "thin": 1, "seed": 0},
    "scan": {
        "thresholds": [10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0],
        "lags": [0, 7, 14],
        "outcomes": ["incidence"],
        "spline_df": {"incidence": 16, "lethality": 10},
    },
    "synth": {
        "adjacency": None,
        **{
            f.name: (list(f.default) if isinstance(f.default, tuple) else f.default)
            for f in dataclasses.fields(SynthConfig)
            if f.name != "graph"
        },
    },
    "output": {"dir": "out", "emit_draws": False},
}

_PATH_KEYS = (("data", "path"), ("data", "adjacency"), ("synth", "adjacency"))


def _merge(base, override, where=""):
    out = copy.deepcopy(base)
    for key, value in (override or {}).items():
        if key not in base:
            raise InputError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict) and key != "columns" and key != "spline_df":
            if not isinstance(value, dict):
                raise InputError(f"config section {where}{key!r} must be a mapping")
            out[key] = _merge(base[key], value, f"{where}{key}.")
        elif isinstance(base[key], dict):
            out[key] = {**base[key], **(value or {})}
        else:
            out[key] = value
    return out


def load_config(path=None):
    """Defaults overlaid with the YAML file at ``path`` (if given)."""
    if path is None:
        return copy.deepcopy(DEFAULTS)
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise InputError(f"cannot read config {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise InputError(f"config {path} is not valid YAML: {exc}") from None
    if not isinstance(raw, dict):
        raise InputError(f"config {path} must be a mapping at top level")
    cfg = _merge(DEFAULTS, raw)
    for section, key in _PATH_KEYS:
        value = cfg[section][key]
        if value is not None and not Path(value).is_absolute():
            cfg[section][key] = str(path.parent / value)
    return cfg


def default_config_text():
    return yaml.safe_dump(DEFAULTS, sort_keys=False, default_flow_style=None)


def _build(cls, section, **extra):
    try:
        return cls(**section, **extra)
    except (TypeError, ValueError) as exc:
        raise InputError(f"invalid {cls.__name__}: {exc}") from None


def model_spec(cfg):
    return _build(ModelSpec, cfg["model"], priors=_build(PriorConfig, cfg["priors"]))


def sampler_config(cfg, workers=1):
    return _build(SamplerConfig, cfg["sampler"], workers=workers)


def scan_grid(cfg):
    m = cfg["model"]
    return _build(
        ScanGrid,
        cfg["scan"],
        random_slope=m["random_slope"],
        spatial=m["spatial"],
        priors=_build(PriorConfig, cfg["priors"]),
    )


def synth_config(cfg, graph=None):
    section = {k: v for k, v in cfg["synth"].items() if k != "adjacency"}
    for key in ("midpoint_range", "population_range"):
        section[key] = tuple(section[key])
    return _build(SynthConfig, section, graph=graph)
