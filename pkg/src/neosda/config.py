"""Run configuration: YAML file, schema validation, CLI overrides.

A config file supplies any subset of the keys; missing keys take the
defaults below. `--set a.b.c=value` overrides individual keys (values are
parsed as YAML).
"""

from __future__ import annotations

import copy
from pathlib import Path

import jsonschema
import yaml

from . import model as mdl
from .errors import ConfigError
from .pipeline import TrainSettings
from .signal_io import Montage
from .synth import SynthSpec

DEFAULTS: dict = {
    "seed": 7,
    "montage": [["F3", "P3"], ["F4", "P4"], ["P3", "P4"]],
    "epoch": {"hop_s": 4.0},
    "postproc": {"min_dur_s": 10.0},
    "train": {
        "kernel": "rbf",
        "c_grid": list(mdl.DEFAULT_C_GRID),
        "gamma_grid": list(mdl.DEFAULT_GAMMA_GRID),
        "inner_folds": 3,
        "outer_folds": 10,
        "balance_ratio": 3.0,
        "max_train_rows": 4000,
        "tol": 1e-3,
        "backend": None,
    },
    "outlier": {
        "k_grid": [3, 5, 9],
        "dist_quantiles": [99.0, 99.5, 99.9],
        "amp_quantiles": [99.0, 99.5, 99.9],
        "max_reference": 20000,
    },
    "calibration": {
        "ma_grid": [1, 3, 5],
        "threshold_grid": [-0.5, -0.25, 0.0, 0.25, 0.5],
        "collar_grid": [0.0, 8.0, 16.0],
    },
    "evaluate": {"bootstrap_iters": 1000},
    "synth": {
        "n_neonates": 12,
        "duration_s": 3600,
        "fs": 256.0,
        "channels": ["F3", "F4", "P3", "P4"],
        "seizure_rate_per_h": 2.0,
        "seizure_dur_s": [30.0, 300.0],
        "seizure_freq_hz": [2.0, 1.0],
        "seizure_amp_uv": [50.0, 150.0],
        "background_rms_uv": 25.0,
        "burst_suppression": None,
        "artifact_rate_per_h": 0.0,
        "artifact_amp_uv": [500.0, 1500.0],
        "expert_jitter_s": 5.0,
        "expert_miss_prob": 0.05,
        "seed": None,
    },
}

_NUM = {"type": "number"}
_POS_NUM = {"type": "number", "exclusiveMinimum": 0}
_POS_INT = {"type": "integer", "minimum": 1}
_NUM_LIST = {"type": "array", "items": _NUM, "minItems": 1}
_PAIR = {"type": "array", "items": _NUM, "minItems": 2, "maxItems": 2}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "montage": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "array",
                "items": {"type": "string"},
                "minItems": 2,
                "maxItems": 2,
            },
        },
        "epoch": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"hop_s": {"type": "number", "exclusiveMinimum": 0, "maximum": 16}},
        },
        "postproc": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"min_dur_s": _POS_NUM},
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kernel": {"enum": ["rbf", "linear"]},
                "c_grid": _NUM_LIST,
                "gamma_grid": _NUM_LIST,
                "inner_folds": {"type": "integer", "minimum": 2},
                "outer_folds": {"type": "integer", "minimum": 2},
                "balance_ratio": _POS_NUM,
                "max_train_rows": {"type": "integer", "minimum": 10},
                "tol": _POS_NUM,
                "backend": {"enum": ["cython", "python", None]},
            },
        },
        "outlier": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "k_grid": {"type": "array", "items": _POS_INT, "minItems": 1},
                "dist_quantiles": _NUM_LIST,
                "amp_quantiles": _NUM_LIST,
                "max_reference": {"type": "integer", "minimum": 100},
            },
        },
        "calibration": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "ma_grid": {"type": "array", "items": _POS_INT, "minItems": 1},
                "threshold_grid": _NUM_LIST,
                "collar_grid": _NUM_LIST,
            },
        },
        "evaluate": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"bootstrap_iters": {"type": "integer", "minimum": 10}},
        },
        "synth": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_neonates": _POS_INT,
                "duration_s": {"type": "integer", "minimum": 60},
                "fs": {"type": "number", "minimum": 64},
                "channels": {"type": "array", "items": {"type": "string"}, "minItems": 2},
                "seizure_rate_per_h": {"type": "number", "minimum": 0},
                "seizure_dur_s": _PAIR,
                "seizure_freq_hz": _PAIR,
                "seizure_amp_uv": _PAIR,
                "background_rms_uv": _POS_NUM,
                "burst_suppression": {"oneOf": [{"type": "null"}, _PAIR]},
                "artifact_rate_per_h": {"type": "number", "minimum": 0},
                "artifact_amp_uv": _PAIR,
                "expert_jitter_s": {"type": "number", "minimum": 0},
                "expert_miss_prob": {"type": "number", "minimum": 0, "maximum": 1},
                "seed": {"oneOf": [{"type": "null"}, {"type": "integer", "minimum": 0}]},
            },
        },
    },
}


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def parse_override(text: str) -> dict:
    """Turn 'a.b.c=value' into a nested dict; the value is parsed as YAML."""
    if "=" not in text:
        raise ConfigError(f"override {text!r} is not of the form key.path=value")
    dotted, raw = text.split("=", 1)
    try:
        value = yaml.safe_load(raw)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse override value {raw!r}: {exc}") from exc
    keys = [k for k in dotted.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {text!r} has an empty key path")
    out: dict = {}
    node = out
    for key in keys[:-1]:
        node[key] = {}
        node = node[key]
    node[keys[-1]] = value
    return out


def load_config(path: str | Path | None = None, overrides=()) -> dict:
    """Defaults, then file, then --set overrides; validated against SCHEMA."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            loaded = yaml.safe_load(Path(path).read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}") from exc
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must hold a mapping")
        cfg = _merge(cfg, loaded)
    for text in overrides:
        cfg = _merge(cfg, parse_override(text))
    try:
        jsonschema.validate(cfg, SCHEMA)
    except jsonschema.ValidationError as exc:
        where = ".".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config key {where}: {exc.message}") from exc
    return cfg


def montage_from_config(cfg: dict) -> Montage:
    return Montage(tuple(tuple(pair) for pair in cfg["montage"]))


def settings_from_config(cfg: dict) -> TrainSettings:
    t, o, cal = cfg["train"], cfg["outlier"], cfg["calibration"]
    return TrainSettings(
        c_grid=tuple(t["c_grid"]),
        gamma_grid=tuple(t["gamma_grid"]),
        kernel=t["kernel"],
        inner_folds=t["inner_folds"],
        outer_folds=t["outer_folds"],
        balance_ratio=t["balance_ratio"],
        max_train_rows=t["max_train_rows"],
        tol=t["tol"],
        hop_s=cfg["epoch"]["hop_s"],
        min_dur_s=cfg["postproc"]["min_dur_s"],
        k_grid=tuple(o["k_grid"]),
        dist_quantiles=tuple(o["dist_quantiles"]),
        amp_quantiles=tuple(o["amp_quantiles"]),
        ma_grid=tuple(cal["ma_grid"]),
        threshold_grid=tuple(cal["threshold_grid"]),
        collar_grid=tuple(cal["collar_grid"]),
        max_reference=o["max_reference"],
        bootstrap_iters=cfg["evaluate"]["bootstrap_iters"],
        backend=t["backend"],
    )


def synth_spec_from_config(cfg: dict) -> SynthSpec:
    s = cfg["synth"]
    seed = s["seed"] if s["seed"] is not None else cfg["seed"]
    bs = s["burst_suppression"]
    return SynthSpec(
        n_neonates=s["n_neonates"],
        duration_s=s["duration_s"],
        fs=s["fs"],
        channels=tuple(s["channels"]),
        seizure_rate_per_h=s["seizure_rate_per_h"],
        seizure_dur_s=tuple(s["seizure_dur_s"]),
        seizure_freq_hz=tuple(s["seizure_freq_hz"]),
        seizure_amp_uv=tuple(s["seizure_amp_uv"]),
        background_rms_uv=s["background_rms_uv"],
        burst_suppression=None if bs is None else tuple(bs),
        artifact_rate_per_h=s["artifact_rate_per_h"],
        artifact_amp_uv=tuple(s["artifact_amp_uv"]),
        expert_jitter_s=s["expert_jitter_s"],
        expert_miss_prob=s["expert_miss_prob"],
        seed=seed,
    )
