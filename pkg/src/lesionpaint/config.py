"""Run configuration: flat dotted-key JSON files merged under command-line flags."""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

DEFAULTS = {
    "seed": 0,
    "views": "all",
    "schedule.T": 1000,
    "schedule.s": 0.008,
    "engine.ddim_stride": 10,
    "engine.truncation_tau": 40,
    "engine.repaint_repeats": 2,
    "engine.x0_clip": 1.0,
    "normalize.p_low": 1.0,
    "normalize.p_high": 99.0,
    "train.lesion_weight": 10.0,
    "train.learning_rate": 3e-4,
    "train.batch_size": 32,
    "train.epochs": 300,
    "train.dropout_prob": 0.25,
    "dict.n_sessions": 8,
    "dict.fraction": 0.125,
    "dict.mode": "pooled",
    "dict.connectivity": 26,
}

# flag dest -> config key
FLAG_KEYS = {
    "seed": "seed",
    "views": "views",
    "T": "schedule.T",
    "s": "schedule.s",
    "stride": "engine.ddim_stride",
    "tau": "engine.truncation_tau",
    "repeats": "engine.repaint_repeats",
    "x0_clip": "engine.x0_clip",
    "lesion_weight": "train.lesion_weight",
    "learning_rate": "train.learning_rate",
    "batch_size": "train.batch_size",
    "epochs": "train.epochs",
    "dropout_prob": "train.dropout_prob",
    "n_sessions": "dict.n_sessions",
    "fraction": "dict.fraction",
    "mode": "dict.mode",
    "connectivity": "dict.connectivity",
}


class ConfigError(ValueError):
    pass


def load_config_file(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"config {path} must be a JSON object of dotted keys")
    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    return data


def resolve(args) -> dict:
    """Defaults, then the ``--config`` file, then explicitly given flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(load_config_file(args.config))
    for dest, key in FLAG_KEYS.items():
        value = getattr(args, dest, None)
        if value is not None:
            cfg[key] = value
    tau = cfg["engine.truncation_tau"]
    if isinstance(tau, str):
        cfg["engine.truncation_tau"] = None if tau.lower() in ("none", "off", "") else int(tau)
    return cfg


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(json.dumps(cfg, sort_keys=True).encode()).hexdigest()
