"""File formats: map artifacts, manifests, beacon registries, JSONL logs.

Every file carries a ``schema`` tag ``"fpbp.<kind>/<major>"``. Readers accept
any minor revision of the major they know and reject other majors.
JSONL files start with a header line holding only the schema tag.
"""
from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional

import numpy as np

from .errors import ConfigError, SchemaVersionError
from .floorplan import FloorPlanMap, StylizedRaster, compile_codes, compile_map
from .radio import Beacon, BeaconRegistry

MAP_SCHEMA = "fpbp.map/1"
MANIFEST_SCHEMA = "fpbp.manifest/1"
BEACONS_SCHEMA = "fpbp.beacons/1"
SCENARIO_SCHEMA = "fpbp.scenario/1"
EVENTS_SCHEMA = "fpbp.events/1"
TRUTH_SCHEMA = "fpbp.truth/1"
OUTPUTS_SCHEMA = "fpbp.outputs/1"
TRACE_SCHEMA = "fpbp.trace/1"
METRICS_SCHEMA = "fpbp.metrics/1"


def _split(tag: str) -> tuple[str, int]:
    try:
        name, version = str(tag).rsplit("/", 1)
        return name, int(version.split(".")[0])
    except ValueError as exc:
        raise ConfigError(f"malformed schema tag {tag!r}") from exc


def check_schema(obj: Mapping[str, Any], expected: str) -> None:
    """Raise unless ``obj['schema']`` names the expected kind and major."""
    tag = obj.get("schema") if isinstance(obj, Mapping) else None
    if tag is None:
        raise ConfigError(f"missing schema field; expected {expected!r}")
    name, major = _split(tag)
    want_name, want_major = _split(expected)
    if name != want_name:
        raise ConfigError(f"file has schema {tag!r}, expected {expected!r}")
    if major != want_major:
        raise SchemaVersionError(f"unsupported {name} major version {major} (this build reads {want_major})")


def read_json(path) -> Any:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def dump_json(obj: Any) -> str:
    """Canonical JSON text: sorted keys, fixed separators, trailing newline."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False) + "\n"


def write_json(path, obj: Any) -> None:
    Path(path).write_text(dump_json(obj), encoding="utf-8")


# --------------------------------------------------------------------------
# map artifact


def rle_encode(codes: np.ndarray) -> list[list[int]]:
    """Row-major run-length pairs ``[code, run]``."""
    flat = np.asarray(codes, dtype=np.uint8).ravel()
    if flat.size == 0:
        return []
    starts = np.flatnonzero(np.r_[True, flat[1:] != flat[:-1]])
    runs = np.diff(np.r_[starts, flat.size])
    return [[int(c), int(n)] for c, n in zip(flat[starts], runs)]


def rle_decode(pairs: Iterable[Iterable[int]], shape: tuple[int, int]) -> np.ndarray:
    pairs = [tuple(p) for p in pairs]
    if not pairs:
        raise ConfigError("empty run-length data")
    vals = np.array([p[0] for p in pairs], dtype=np.uint8)
    runs = np.array([p[1] for p in pairs], dtype=np.int64)
    if np.any(runs <= 0) or int(runs.sum()) != shape[0] * shape[1]:
        raise ConfigError("run-length data does not match the raster shape")
    return np.repeat(vals, runs).reshape(shape)


def map_to_dict(fmap: FloorPlanMap) -> dict:
    return {
        "schema": MAP_SCHEMA,
        "floor_id": fmap.floor_id,
        "resolution_r": fmap.resolution_r,
        "interval_I_M": fmap.grid.interval_I_M,
        "width_px": fmap.width_px,
        "height_px": fmap.height_H_I,
        "codes_rle": rle_encode(fmap.codes),
        "contours": [
            {"room_id": int(c.room_id), "kind": c.kind.value, "vertices": c.vertices.astype(int).tolist()}
            for c in fmap.contours
        ],
        "grid": {
            "points": np.round(fmap.grid.points, 9).tolist(),
            "index": fmap.grid.index.astype(int).tolist(),
        },
        "summary": {"rooms": fmap.n_rooms, "grid_points": int(len(fmap.grid.points)),
                    "doors": len(fmap.door_rooms)},
    }


def save_map(fmap: FloorPlanMap, path) -> None:
    write_json(path, map_to_dict(fmap))


def map_from_dict(d: Mapping[str, Any]) -> FloorPlanMap:
    check_schema(d, MAP_SCHEMA)
    try:
        shape = (int(d["height_px"]), int(d["width_px"]))
        codes = rle_decode(d["codes_rle"], shape)
        fmap = compile_codes(codes, float(d["resolution_r"]), float(d["interval_I_M"]), int(d["floor_id"]))
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed map artifact: {exc}") from exc
    # the stored derived data must agree with what the raster compiles to
    if len(d.get("grid", {}).get("points", [])) != len(fmap.grid.points) or \
            len(d.get("contours", [])) != len(fmap.contours):
        raise ConfigError("map artifact is inconsistent with its raster")
    return fmap


def load_map(path) -> FloorPlanMap:
    """Load a map artifact, or compile a manifest on the fly."""
    d = read_json(path)
    if isinstance(d, Mapping) and str(d.get("schema", "")).startswith("fpbp.manifest/"):
        return compile_manifest(path)
    return map_from_dict(d)


# --------------------------------------------------------------------------
# manifest


def load_manifest(path) -> dict:
    """Manifest fields with file references resolved against its directory."""
    d = read_json(path)
    check_schema(d, MANIFEST_SCHEMA)
    base = Path(path).parent
    out = dict(d)
    for key in ("resolution_r", "interval_I_M"):
        if key not in out:
            raise ConfigError(f"manifest {path} lacks {key!r}")
    out.setdefault("floor_id", 0)
    out.setdefault("map_yaw_deg", 0.0)
    if "raster" in out:
        out["raster"] = str(base / out["raster"])
    pal = out.get("palette")
    if isinstance(pal, str):
        pal_doc = read_json(base / pal)
        out["palette"] = pal_doc.get("classes", pal_doc) if isinstance(pal_doc, Mapping) else pal_doc
    return out


def compile_manifest(path, raster: Optional[str] = None, palette: Optional[Mapping[str, str]] = None) -> FloorPlanMap:
    m = load_manifest(path)
    raster = raster or m.get("raster")
    if raster is None:
        raise ConfigError("no raster given and the manifest names none")
    pal = palette if palette is not None else m.get("palette")
    img = StylizedRaster.from_png(raster, pal) if Path(raster).exists() else None
    if img is None:
        raise ConfigError(f"raster not found: {raster}")
    return compile_map(img, float(m["resolution_r"]), float(m["interval_I_M"]), int(m["floor_id"]))


def load_palette(path) -> dict:
    d = read_json(path)
    if not isinstance(d, Mapping):
        raise ConfigError("palette file must hold a JSON object")
    return dict(d.get("classes", {k: v for k, v in d.items() if k != "schema"}))


# --------------------------------------------------------------------------
# beacons


def load_beacons(path) -> BeaconRegistry:
    """Beacon registry from JSON (``{"beacons": [...]}`` or a list) or CSV."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"beacon file not found: {path}")
    if path.suffix.lower() == ".csv":
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
    else:
        d = read_json(path)
        if isinstance(d, Mapping):
            check_schema(d, BEACONS_SCHEMA)
            rows = d.get("beacons", [])
        else:
            rows = d
    try:
        beacons = [Beacon(str(r["uuid"]), (float(r["x"]), float(r["y"])), int(r.get("floor", r.get("floor_id", 0)) or 0))
                   for r in rows]
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"malformed beacon record in {path}: {exc}") from exc
    return BeaconRegistry(beacons)


def beacons_to_dict(registry: BeaconRegistry) -> dict:
    return {
        "schema": BEACONS_SCHEMA,
        "beacons": [{"uuid": b.uuid, "x": float(b.position[0]), "y": float(b.position[1]), "floor": int(b.floor_id)}
                    for b in registry],
    }


# --------------------------------------------------------------------------
# JSONL logs


def write_jsonl(path, schema: str, records: Iterable[Mapping[str, Any]]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(dump_json({"schema": schema}))
        for rec in records:
            fh.write(dump_json(_plain(rec)))
            n += 1
    return n


def read_jsonl(path, schema: str) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"log not found: {path}")
    with path.open(encoding="utf-8") as fh:
        lines = [ln for ln in (s.strip() for s in fh) if ln]
    if not lines:
        raise ConfigError(f"{path} is empty")
    try:
        header = json.loads(lines[0])
        check_schema(header, schema)
        return [json.loads(ln) for ln in lines[1:]]
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSONL: {exc}") from exc


def _plain(v):
    if isinstance(v, Mapping):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, np.generic):
        return v.item()
    return v


# --------------------------------------------------------------------------
# scenario


def load_scenario(path, seed: Optional[int] = None):
    """Build a ``sim.Scenario`` from a scenario file.

    Either ``building`` names a built-in layout (its waypoints are the
    default) or ``maps`` and ``beacons`` reference files next to the scenario.
    """
    import math

    from . import buildings, sim
    from .radio import PathLossModel

    d = read_json(path)
    check_schema(d, SCENARIO_SCHEMA)
    base = Path(path).parent
    known = {"schema", "building", "maps", "beacons", "waypoints", "speed", "stride", "seed", "max_steps",
             "init_dwell_s", "imu_mode", "noise", "path_loss", "radio"}
    unknown = set(d) - known
    if unknown:
        raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
    waypoints = d.get("waypoints")
    if d.get("building"):
        builder = {"four_rooms_corridor": buildings.four_rooms_corridor, "two_rooms": buildings.two_rooms,
                   "elevator_floors": buildings.elevator_floors}.get(d["building"])
        if builder is None:
            raise ConfigError(f"unknown built-in building {d['building']!r}")
        b = builder()
        maps, registry = b.maps, b.registry
        waypoints = b.waypoints if waypoints is None else waypoints
    else:
        if "maps" not in d or "beacons" not in d:
            raise ConfigError("scenario needs either 'building' or both 'maps' and 'beacons'")
        maps = {}
        for ref in d["maps"]:
            fmap = load_map(base / ref)
            maps[fmap.floor_id] = fmap
        registry = load_beacons(base / d["beacons"])
    if not waypoints:
        raise ConfigError("scenario has no waypoints")
    nz = d.get("noise", {})
    try:
        noise = sim.StepNoise(
            heading_std=math.radians(nz.get("heading_std_deg", 3.0)),
            length_std=float(nz.get("length_std", 0.03)),
            heading_drift=float(nz.get("heading_drift", 0.0)),
            heading_bias=math.radians(nz.get("heading_bias_deg", 0.0)),
        )
        return sim.Scenario(
            maps=maps, registry=registry, waypoints=[tuple(w) for w in waypoints],
            speed=float(d.get("speed", 1.0)), stride=float(d.get("stride", 0.6)),
            path_loss=PathLossModel(**d.get("path_loss", {})), radio=sim.RadioSim(**d.get("radio", {})),
            noise=noise, init_dwell_s=float(d.get("init_dwell_s", 2.0)), max_steps=d.get("max_steps"),
            seed=int(d.get("seed", 0) if seed is None else seed), imu_mode=bool(d.get("imu_mode", False)),
        )
    except TypeError as exc:
        raise ConfigError(f"malformed scenario: {exc}") from exc


def truth_records(truth) -> list[dict]:
    return [{"step": i, "t_ms": int(s.t_ms), "x": float(s.position[0]), "y": float(s.position[1]),
             "floor": int(s.floor)} for i, s in enumerate(truth.steps)]
