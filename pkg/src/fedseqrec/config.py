"""JSON run configuration: validation, defaults, and the effective-config file."""

from __future__ import annotations

import copy
import json
from pathlib import Path

from .embed_service import ProviderConfig
from .fedsim import FedConfig

# Every section with its defaults; any key not listed here is rejected.
DEFAULTS = {
    "data": {
        "bundle": None,
        "synth": None,
    },
    "model": {"type": "sasrec", "dim": 8, "depth": 1, "max_len": 50},
    "federation": {"rounds": 20, "clients_per_step": 256, "local_epochs": 5, "lr": 0.001,
                   "neg_ratio": 1, "central_batch_size": 32},
    "fellas": {"mode": "fellas", "alpha": 0.1, "inv_epsilon": 0.01, "random_sequences": 1,
               "freeze_phi": False},
    "provider": {"mode": "stub", "dim": 64, "seed": 0, "endpoint": None, "cache": None},
    "attack": {"grid": [0.1, 0.01, 0.001], "average": "micro", "matching": "positional"},
    "seed": 0,
    "output_dir": "runs/default",
}

SYNTH_DEFAULTS = {"num_users": 500, "num_items": 50, "sharpness": 3.0, "seed": 0, "num_groups": 5,
                  "min_len": 5, "max_len": 15, "popularity_skew": 0.0, "shared_words": 0}


class ConfigError(ValueError):
    pass


def _merge(defaults: dict, given: dict, where: str) -> dict:
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    for key, value in given.items():
        if isinstance(defaults[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{where + '.' if where else ''}{key} must be an object")
            out[key] = _merge(defaults[key], value, f"{where + '.' if where else ''}{key}")
        else:
            out[key] = value
    return out


def resolve(raw: dict) -> dict:
    """Fill defaults and validate; returns the effective configuration."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = _merge(DEFAULTS, raw, "")
    data = cfg["data"]
    if data["synth"] is not None:
        if not isinstance(data["synth"], dict):
            raise ConfigError("data.synth must be an object")
        data["synth"] = _merge(SYNTH_DEFAULTS, data["synth"], "data.synth")
    if (data["bundle"] is None) == (data["synth"] is None):
        raise ConfigError("data needs exactly one of 'bundle' or 'synth'")
    if cfg["attack"]["average"] not in ("micro", "macro"):
        raise ConfigError("attack.average must be 'micro' or 'macro'")
    if cfg["attack"]["matching"] not in ("positional", "multiset"):
        raise ConfigError("attack.matching must be 'positional' or 'multiset'")
    if not cfg["attack"]["grid"] or any(not float(e) > 0 for e in cfg["attack"]["grid"]):
        raise ConfigError("attack.grid must be a non-empty list of positive values")
    # constructing the typed configs runs their own checks
    try:
        fed_config(cfg)
        provider_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def load(path, seed: int | None = None) -> dict:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    if seed is not None:
        raw = dict(raw, seed=seed)
    return resolve(raw)


def write_effective(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "config.effective.json"
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(cfg, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def fed_config(cfg: dict, mode: str | None = None) -> FedConfig:
    m, f, x = cfg["model"], cfg["federation"], cfg["fellas"]
    return FedConfig(
        rounds=f["rounds"], clients_per_step=f["clients_per_step"], local_epochs=f["local_epochs"],
        lr=f["lr"], neg_ratio=f["neg_ratio"], central_batch_size=f["central_batch_size"],
        alpha=x["alpha"], inv_epsilon=x["inv_epsilon"], random_sequences=x["random_sequences"],
        freeze_phi=x["freeze_phi"], mode=mode or x["mode"],
        model=m["type"], dim=m["dim"], depth=m["depth"], max_len=m["max_len"], seed=cfg["seed"],
    )


def provider_config(cfg: dict) -> ProviderConfig:
    p = cfg["provider"]
    return ProviderConfig(p["mode"], p["dim"], p["seed"], p["endpoint"], p["cache"])
