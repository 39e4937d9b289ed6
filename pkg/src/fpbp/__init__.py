"""Floor-plan-assisted BLE + PDR indoor positioning."""
from __future__ import annotations

from .config import engine_config, load_config
from .engine import EngineConfig, Session, replay
from .errors import FpbpError
from .floorplan import FloorPlanMap, StylizedRaster, compile_codes, compile_map
from .kernels import BACKEND
from .radio import Beacon, BeaconRegistry, GmlConfig, PathLossModel

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Beacon",
    "BeaconRegistry",
    "EngineConfig",
    "FloorPlanMap",
    "FpbpError",
    "GmlConfig",
    "PathLossModel",
    "Session",
    "StylizedRaster",
    "compile_codes",
    "compile_map",
    "engine_config",
    "load_config",
    "replay",
]
