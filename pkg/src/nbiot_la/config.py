"""JSON run configuration: one section per module, CLI flags layered on top."""
from __future__ import annotations

import copy
import json
import os
from dataclasses import fields
from pathlib import Path

from .channel import DEFAULT_TABLE, ResourceTable, SyntheticAwgn, TabulatedBler, extract_oracle
from .errors import ConfigError
from .simulator import SessionConfig

ENV_CONFIG = "NBIOT_LA_CONFIG"

COVERAGE_SNRS = [-24.0, -20.0, -16.0]
ALL_STRATEGIES = ["itbs-nr", "nr-itbs", "itbs", "nr", "itbs+nr", "luts"]

DEFAULTS = {
    "oracle": {"kind": "synthetic", "snr50_db": -5.1, "slope": 4.6, "itbs_penalty_db": 1.15, "tbs_ref": 256},
    "resource_table": None,
    "lut": {
        "path": None,
        "method": "brute-force",
        "tbs": [256],
        "snr_min": -24.0,
        "snr_max": -16.0,
        "snr_step_db": 1.0,
        "bler_targets": [0.05],
        "exploratory_repeats": 400,
    },
    "strategy": {
        "name": "itbs-nr",
        "tolerance": None,
        "window": 20,
        "min_samples": 5,
        "fixed_nr": 128,
        "start_itbs": None,
        "start_nr": 1,
    },
    "session": {
        "tbs": 256,
        "n_blocks": 500,
        "true_snr": -24.0,
        "snr_noise_std": 0.0,
        "snr_cadence": "session",
        "mode": "unack",
        "max_retransmissions": None,
        "safety_cap": 64,
        "harq_discount": 0.5,
        "bler_t": 0.05,
        "itbs_max": 3,
        "seed": 0,
    },
    "sweep": {"snrs": COVERAGE_SNRS, "strategies": ALL_STRATEGIES, "realizations": 500, "modes": ["unack", "ack"]},
    "tradeoff": {
        "snrs": COVERAGE_SNRS,
        "loss_grid": [float(x) for x in range(31)],
        "modes": ["unack", "ack"],
        "loss_tolerance": 1e-4,
        "max_attempts": 64,
    },
}


def _merge(base: dict, override: dict, where: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            if key == "oracle":
                out[key] = dict(value)
            else:
                out[key] = _merge(base[key], value, f"{where}{key}.")
        else:
            out[key] = value
    return out


def load_config(path=None) -> dict:
    """Defaults merged with a config file; a run manifest is accepted too.

    Without ``path`` the file named by ``$NBIOT_LA_CONFIG`` is used, if set.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG)
    if path is None:
        return copy.deepcopy(DEFAULTS)
    try:
        data = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if "manifest_version" in data:
        data = data["config"]
    return _merge(DEFAULTS, data)


def build_oracle(cfg: dict):
    oracle_cfg = dict(cfg["oracle"])
    kind = oracle_cfg.pop("kind", "synthetic")
    if kind == "synthetic":
        try:
            return SyntheticAwgn(**oracle_cfg)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"oracle: {exc}") from None
    if kind == "tabulated":
        if "path" not in oracle_cfg:
            raise ConfigError("tabulated oracle needs 'path'")
        return TabulatedBler.from_csv(oracle_cfg["path"], oracle_cfg.get("snr_step_db", 1.0))
    if kind == "extract":
        return extract_oracle(cfg["session"]["itbs_max"])
    raise ConfigError(f"unknown oracle kind {kind!r}")


def build_table(cfg: dict) -> ResourceTable:
    path = cfg.get("resource_table")
    return DEFAULT_TABLE if path is None else ResourceTable.from_csv(path)


def session_config(cfg: dict) -> SessionConfig:
    merged = dict(cfg["session"])
    st = cfg["strategy"]
    merged.update(
        strategy=st["name"], tolerance=st["tolerance"], window=st["window"], min_samples=st["min_samples"],
        fixed_nr=st["fixed_nr"], start_itbs=st["start_itbs"], start_nr=st["start_nr"],
    )
    names = {f.name for f in fields(SessionConfig)}
    unknown = set(merged) - names
    if unknown:
        raise ConfigError(f"unknown session keys {sorted(unknown)}")
    return SessionConfig(**merged).validate()


def snr_grid(lut_cfg: dict) -> list[float]:
    lo, hi, step = lut_cfg["snr_min"], lut_cfg["snr_max"], lut_cfg["snr_step_db"]
    if step <= 0:
        raise ConfigError("lut.snr_step_db must be positive")
    n = int(round((hi - lo) / step))
    return [round(lo + i * step, 9) for i in range(n + 1)] if hi >= lo else []
