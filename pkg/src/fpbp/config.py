"""Run configuration: packaged defaults, user overrides, engine construction.

Every tunable lives in ``data/default_config.json``. A user file only needs
the keys it changes; unknown keys are rejected so typos do not pass silently.
"""
from __future__ import annotations

import copy
import json
import math
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional

from .engine import EngineConfig, FloorTransitionPolicy
from .errors import ConfigError
from .formats import check_schema
from .fusion import ParticleConfig
from .ppc import PpcConfig
from .radio import GmlConfig, PathLossModel

CONFIG_SCHEMA = "fpbp.config/1"


def default_config() -> dict:
    text = resources.files("fpbp").joinpath("data/default_config.json").read_text(encoding="utf-8")
    return json.loads(text)


def merge(base: Mapping[str, Any], override: Mapping[str, Any], path: str = "") -> dict:
    """Deep-merge ``override`` into a copy of ``base``; keys must already exist."""
    out = copy.deepcopy(dict(base))
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key == "schema":
            continue
        if key not in out:
            raise ConfigError(f"unknown config key {where!r}")
        if isinstance(out[key], dict):
            if not isinstance(value, Mapping):
                raise ConfigError(f"config key {where!r} must be an object")
            out[key] = merge(out[key], value, where)
        else:
            out[key] = value
    return out


def load_config(path: Optional[str | Path] = None) -> dict:
    cfg = default_config()
    if path is None:
        return cfg
    try:
        user = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config file must hold a JSON object")
    if "schema" in user:
        check_schema(user, CONFIG_SCHEMA)
    return merge(cfg, user)


def engine_config(cfg: Mapping[str, Any], algorithm: Optional[str] = None,
                  seed: Optional[int] = None) -> EngineConfig:
    """Build an ``EngineConfig``; ``algorithm``/``seed`` override the file."""
    try:
        radio, gml, pdr = cfg["radio"], cfg["gml"], cfg["pdr"]
        pf, ppc, eng = cfg["particles"], cfg["ppc"], cfg["engine"]
        return EngineConfig(
            algorithm=eng["algorithm"] if algorithm is None else algorithm,
            interval_ms=int(gml["interval_ms"]),
            init_ms=int(eng["init_ms"]),
            rssi_max_age_ms=int(radio["rssi_max_age_ms"]),
            q_K=float(radio["q_K"]),
            r_K=float(radio["r_K"]),
            path_loss=PathLossModel(**radio["path_loss"]),
            gml=GmlConfig(
                N_select=int(gml["N_select"]), kappa=float(gml["kappa"]), tau=float(gml["tau"]),
                d0=float(gml["d0"]), smoothing_n=int(gml["smoothing_n"]), mode=str(gml["mode"]),
            ),
            particles=ParticleConfig(
                m=int(pf["m"]), nu_s=float(pf["nu_s"]), nu_theta=math.radians(pf["nu_theta_deg"]),
                sigma2=float(pf["sigma2"]), ess_fraction=pf["ess_fraction"], stale_ms=int(pf["stale_ms"]),
            ),
            ppc=PpcConfig(
                delta_phi=math.radians(ppc["delta_phi_deg"]), N_angles=int(ppc["N_angles"]),
                alpha0=math.radians(ppc["alpha0_deg"]), scale_f=float(ppc["scale_f"]),
                epsilon=float(ppc["epsilon"]), case2_streak_limit=int(ppc["case2_streak_limit"]),
                raycast_delta=ppc["raycast_delta"],
            ),
            floors=FloorTransitionPolicy(**cfg["floors"]),
            frbw_g=float(eng["frbw_g"]),
            pdr={k: pdr[k] for k in ("h", "z_th", "k_th", "beta", "k0", "gain")},
            map_yaw=math.radians(pdr["map_yaw_deg"]),
            seed=int(eng["seed"] if seed is None else seed),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration: {exc}") from exc
