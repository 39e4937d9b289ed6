"""Stylized floor-plan compilation and map queries.

A stylized raster paints every pixel in one of four exact palette colors
(Walkable, Wall, Door, FTA). ``compile_map`` turns it into an immutable
``FloorPlanMap`` that answers the queries the online phase needs: the map
feature at a point, room membership, surface normals, closest contour
points and grid traversal for raycasting.

Coordinates: ICS has its origin at the top-left image corner with y down,
in pixels; MCS is in meters with y up and its origin at the bottom-left
corner. Pixel ``(col, row)`` covers ``[col, col+1) x [row, row+1)`` in ICS.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional

import numpy as np
from scipy import ndimage

from . import geometry, kernels
from .errors import ConfigError, DegenerateMap, OutOfBounds, UnknownColor, ZeroGradient

# class codes stored in FloorPlanMap.codes
WALKABLE, WALL, DOOR, FTA = 0, 1, 2, 3
CLASS_NAMES = ("Walkable", "Wall", "Door", "FTA")
_CODE_VALUE = np.array([0.0, 1.0, 0.5, 0.25])

DEFAULT_PALETTE = {
    "Walkable": "#ffffff",
    "Wall": "#000000",
    "Door": "#ff0000",
    "FTA": "#0000ff",
}

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


class MapFeature(float, enum.Enum):
    """Value of the map feature function M(x)."""

    WALKABLE = 0.0
    FTA = 0.25
    DOOR = 0.5
    WALL = 1.0


_CODE_FEATURE = (MapFeature.WALKABLE, MapFeature.WALL, MapFeature.DOOR, MapFeature.FTA)


class ContourKind(str, enum.Enum):
    ROOM_BOUNDARY = "RoomBoundary"
    INTERIOR_OBSTACLE = "InteriorObstacle"


def parse_hex(color: str) -> tuple[int, int, int]:
    s = color.strip().lstrip("#")
    if len(s) != 6:
        raise ConfigError(f"bad color {color!r}; expected #rrggbb")
    try:
        return int(s[0:2], 16), int(s[2:4], 16), int(s[4:6], 16)
    except ValueError as exc:
        raise ConfigError(f"bad color {color!r}") from exc


def normalize_palette(palette: Optional[Mapping[str, str]]) -> dict[str, tuple[int, int, int]]:
    merged = dict(DEFAULT_PALETTE)
    if palette:
        unknown = set(palette) - set(CLASS_NAMES)
        if unknown:
            raise ConfigError(f"unknown palette classes: {sorted(unknown)}")
        merged.update(palette)
    rgb = {name: parse_hex(merged[name]) for name in CLASS_NAMES}
    if len(set(rgb.values())) != len(rgb):
        raise ConfigError("palette colors must be distinct")
    return rgb


@dataclass(frozen=True)
class StylizedRaster:
    """An RGB raster plus the color convention it was painted with."""

    pixels: np.ndarray  # (H, W, 3) uint8
    palette: dict = field(default_factory=lambda: dict(DEFAULT_PALETTE))

    @property
    def width_px(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height_px(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def from_png(cls, path, palette: Optional[Mapping[str, str]] = None) -> "StylizedRaster":
        from PIL import Image

        with Image.open(path) as img:
            if img.mode == "RGBA":
                arr = np.asarray(img)
                if np.any(arr[..., 3] != 255):
                    raise ConfigError("raster has transparent pixels; stylized rasters must be opaque")
                arr = arr[..., :3]
            else:
                arr = np.asarray(img.convert("RGB"))
        return cls(np.ascontiguousarray(arr, dtype=np.uint8), dict(palette or DEFAULT_PALETTE))

    @classmethod
    def from_codes(cls, codes: np.ndarray, palette: Optional[Mapping[str, str]] = None) -> "StylizedRaster":
        """Paint a class-code array with the palette colors."""
        rgb = normalize_palette(palette)
        lut = np.array([rgb[name] for name in CLASS_NAMES], dtype=np.uint8)
        return cls(lut[np.asarray(codes, dtype=np.intp)], dict(palette or DEFAULT_PALETTE))

    def to_png(self, path) -> None:
        from PIL import Image

        Image.fromarray(self.pixels, mode="RGB").save(path)

    def classify(self) -> np.ndarray:
        """Class code per pixel; raises ``UnknownColor`` on the first stray pixel."""
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ConfigError(f"raster must be (H, W, 3) RGB, got shape {px.shape}")
        if px.shape[0] < 2 or px.shape[1] < 2:
            raise ConfigError("raster must be at least 2x2 pixels")
        rgb = normalize_palette(self.palette)
        key = (px[..., 0].astype(np.int32) << 16) | (px[..., 1].astype(np.int32) << 8) | px[..., 2]
        codes = np.full(key.shape, 255, dtype=np.uint8)
        for code, name in enumerate(CLASS_NAMES):
            r, g, b = rgb[name]
            codes[key == ((r << 16) | (g << 8) | b)] = code
        bad = np.argwhere(codes == 255)
        if len(bad):
            row, col = (int(v) for v in bad[0])
            raise UnknownColor(col, row, px[row, col])
        return codes


@dataclass(frozen=True)
class Contour:
    """Closed pixel-edge polygon. ``vertices`` are ICS corner coordinates."""

    vertices: np.ndarray
    kind: ContourKind
    room_id: int
    vertices_mcs: np.ndarray = field(repr=False, default=None)


@dataclass(frozen=True)
class GridArray:
    interval_I_M: float
    points: np.ndarray  # (M, 2) map coordinates
    index: np.ndarray  # (M, 2) integer (i, j) of each point


def _trace_loops(region: np.ndarray) -> list[np.ndarray]:
    """Trace every boundary loop of a binary region along pixel edges.

    Edges are directed with the region on the right (y-down screen frame).
    At pinch vertices the tracer turns right first, which keeps diagonally
    touching pixels apart (4-connected region, 8-connected background).
    """
    h, w = region.shape
    pad = np.zeros((h + 2, w + 2), dtype=bool)
    pad[1:-1, 1:-1] = region
    inner = pad[1:-1, 1:-1]
    # direction vectors: 0 right, 1 down, 2 left, 3 up
    dvec = ((1, 0), (0, 1), (-1, 0), (0, -1))
    out: dict[tuple[int, int], list[int]] = {}

    def add(rows, cols, x0, y0, d):
        for r, c in zip(rows.tolist(), cols.tolist()):
            out.setdefault((c + x0, r + y0), []).append(d)

    r, c = np.nonzero(inner & ~pad[:-2, 1:-1])  # top edge, heading right
    add(r, c, 0, 0, 0)
    r, c = np.nonzero(inner & ~pad[1:-1, 2:])  # right edge, heading down
    add(r, c, 1, 0, 1)
    r, c = np.nonzero(inner & ~pad[2:, 1:-1])  # bottom edge, heading left
    add(r, c, 1, 1, 2)
    r, c = np.nonzero(inner & ~pad[1:-1, :-2])  # left edge, heading up
    add(r, c, 0, 1, 3)

    loops = []
    for start in sorted(out):
        while out.get(start):
            d0 = out[start].pop(0)
            pts = [start]
            v, d = start, d0
            while True:
                v = (v[0] + dvec[d][0], v[1] + dvec[d][1])
                choices = out.get(v, [])
                avail = choices + [d0] if v == start else choices
                nd = next(((d + t) % 4 for t in (1, 0, 3) if (d + t) % 4 in avail), None)
                if nd is None or (v == start and nd == d0 and nd not in choices):
                    break
                choices.remove(nd)
                if nd != d:
                    pts.append(v)
                d = nd
            loops.append(np.array(pts, dtype=float))
    return loops


@dataclass(frozen=True)
class FloorPlanMap:
    """Compiled, immutable floor-plan map."""

    codes: np.ndarray  # (H, W) uint8 class codes
    resolution_r: float  # pixels per meter
    floor_id: int
    contours: tuple
    grid: GridArray
    room_labels: np.ndarray = field(repr=False)  # 4-connected passable components, 0 = obstacle
    door_labels: np.ndarray = field(repr=False)  # 8-connected door components, 0 = none
    door_rooms: dict = field(repr=False)
    blocked_all: np.ndarray = field(repr=False)  # wall or door
    blocked_wall: np.ndarray = field(repr=False)
    room_contour: dict = field(repr=False)  # room id -> contour index of its boundary
    _room_area: dict = field(repr=False)
    _room_bbox: dict = field(repr=False)

    # -- basic properties ---------------------------------------------------
    @property
    def width_px(self) -> int:
        return int(self.codes.shape[1])

    @property
    def height_H_I(self) -> int:
        return int(self.codes.shape[0])

    @property
    def extent(self) -> tuple[float, float]:
        return self.width_px / self.resolution_r, self.height_H_I / self.resolution_r

    @property
    def feature_field(self) -> np.ndarray:
        return _CODE_VALUE[self.codes]

    @property
    def n_rooms(self) -> int:
        return len(self.room_contour)

    # -- transforms -----------------------------------------------------------
    def ics_to_mcs(self, p_ics) -> np.ndarray:
        p = np.asarray(p_ics, dtype=float)
        return np.stack([p[..., 0] / self.resolution_r, (self.height_H_I - p[..., 1]) / self.resolution_r], axis=-1)

    def mcs_to_ics(self, p_mcs) -> np.ndarray:
        p = np.asarray(p_mcs, dtype=float)
        return np.stack([p[..., 0] * self.resolution_r, self.height_H_I - p[..., 1] * self.resolution_r], axis=-1)

    def pixel_of(self, p_mcs) -> tuple[int, int]:
        """(col, row) of the pixel containing a map point; may be out of range."""
        return (
            math.floor(p_mcs[0] * self.resolution_r),
            math.floor(self.height_H_I - p_mcs[1] * self.resolution_r),
        )

    def pixel_center(self, col: int, row: int) -> np.ndarray:
        return np.array([(col + 0.5) / self.resolution_r, (self.height_H_I - row - 0.5) / self.resolution_r])

    def in_bounds(self, p_mcs) -> bool:
        col, row = self.pixel_of(p_mcs)
        return 0 <= col < self.width_px and 0 <= row < self.height_H_I

    # -- queries ------------------------------------------------------------
    def code_at(self, p_mcs) -> int:
        col, row = self.pixel_of(p_mcs)
        if not (0 <= col < self.width_px and 0 <= row < self.height_H_I):
            raise OutOfBounds(f"point ({p_mcs[0]:.3f}, {p_mcs[1]:.3f}) outside map extent {self.extent}")
        return int(self.codes[row, col])

    def feature_at(self, p_mcs) -> MapFeature:
        return _CODE_FEATURE[self.code_at(p_mcs)]

    def features_at(self, pts: np.ndarray) -> np.ndarray:
        """Vectorized M(x); points out of range get 1.0 (treated as wall)."""
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        cols = np.floor(pts[:, 0] * self.resolution_r).astype(np.int64)
        rows = np.floor(self.height_H_I - pts[:, 1] * self.resolution_r).astype(np.int64)
        ok = (cols >= 0) & (cols < self.width_px) & (rows >= 0) & (rows < self.height_H_I)
        out = np.ones(len(pts))
        out[ok] = _CODE_VALUE[self.codes[rows[ok], cols[ok]]]
        return out

    def is_walkable(self, p_mcs) -> bool:
        return self.in_bounds(p_mcs) and self.code_at(p_mcs) == WALKABLE

    def is_passable(self, p_mcs) -> bool:
        """Walkable or FTA."""
        return self.in_bounds(p_mcs) and self.code_at(p_mcs) in (WALKABLE, FTA)

    def surface_normal_at(self, p_mcs) -> np.ndarray:
        """Unit normal of the obstacle boundary near ``p_mcs``, pointing from
        the obstacle toward walkable space, in MCS."""
        col, row = self.pixel_of(p_mcs)
        h, w = self.codes.shape
        patch = np.ones((3, 3))
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                rr, cc = row + dr, col + dc
                if 0 <= rr < h and 0 <= cc < w:
                    patch[dr + 1, dc + 1] = float(self.blocked_all[rr, cc])
        gx = float(np.sum(_SOBEL_X * patch))
        gy = float(np.sum(_SOBEL_Y * patch))
        norm = math.hypot(gx, gy)
        if norm < 1e-9:
            raise ZeroGradient(f"no obstacle boundary at ({p_mcs[0]:.3f}, {p_mcs[1]:.3f})")
        # gradient points into the obstacle (ICS); negate and flip y for MCS
        n = np.array([-gx / norm, gy / norm])
        base = np.asarray(p_mcs, dtype=float)
        ahead = base + n / self.resolution_r
        behind = base - n / self.resolution_r
        if self._blocked_or_out(ahead) and not self._blocked_or_out(behind):
            n = -n
        return n

    def _blocked_or_out(self, p) -> bool:
        col, row = self.pixel_of(p)
        if not (0 <= col < self.width_px and 0 <= row < self.height_H_I):
            return True
        return bool(self.blocked_all[row, col])

    def room_of(self, p_mcs) -> Optional[int]:
        """Id of the room boundary containing ``p_mcs``; None inside obstacles."""
        col, row = self.pixel_of(p_mcs)
        if not (0 <= col < self.width_px and 0 <= row < self.height_H_I):
            return None
        if self.codes[row, col] in (WALL, DOOR):
            return None
        # test the pixel center: never on a contour edge
        cx, cy = col + 0.5, row + 0.5
        best, best_area = None, math.inf
        for rid, ci in self.room_contour.items():
            x0, y0, x1, y1 = self._room_bbox[rid]
            if not (x0 <= cx <= x1 and y0 <= cy <= y1):
                continue
            area = self._room_area[rid]
            if area < best_area and geometry.point_in_polygon(cx, cy, self.contours[ci].vertices):
                best, best_area = rid, area
        return best

    def nearest_contour(self, p_mcs, contour_ids=None) -> tuple[int, float, np.ndarray]:
        """``(contour_id, distance, point)`` of the closest contour point.

        Ties go to the lowest contour id, then the lowest edge index.
        """
        p = np.asarray(p_mcs, dtype=float)
        ids = range(len(self.contours)) if contour_ids is None else sorted(contour_ids)
        best = (-1, math.inf, None)
        for cid in ids:
            d, q, _ = geometry.closest_point_on_polygon(p, self.contours[cid].vertices_mcs)
            if d < best[1]:
                best = (cid, d, q)
        if best[0] < 0:
            raise ValueError("no contours to search")
        return best

    def closest_contour_point(self, p_mcs, contour_ids=None) -> np.ndarray:
        return self.nearest_contour(p_mcs, contour_ids)[2]

    def contours_of_room(self, room_id: int) -> list[int]:
        return [i for i, c in enumerate(self.contours) if c.room_id == room_id]

    def door_id_at(self, p_mcs) -> int:
        col, row = self.pixel_of(p_mcs)
        if not (0 <= col < self.width_px and 0 <= row < self.height_H_I):
            return 0
        return int(self.door_labels[row, col])

    def trace(self, x1, x2, walls_only: bool = False):
        """First blocked pixel along the segment ``x1 -> x2``.

        Returns ``(t, col, row)`` with ``t`` in [0, 1] or ``None``. Door
        pixels block unless ``walls_only``; pixels off the raster always block.
        """
        mask = self.blocked_wall if walls_only else self.blocked_all
        r, h = self.resolution_r, self.height_H_I
        return kernels.raycast_grid(
            mask, float(x1[0]) * r, h - float(x1[1]) * r, float(x2[0]) * r, h - float(x2[1]) * r
        )

    def code_of_pixel(self, col: int, row: int) -> int:
        if 0 <= col < self.width_px and 0 <= row < self.height_H_I:
            return int(self.codes[row, col])
        return WALL


def _build_grid(codes: np.ndarray, r: float, interval: float) -> GridArray:
    h, w = codes.shape
    X, Y = w / r, h / r
    ni, nj = math.floor(X / interval), math.floor(Y / interval)
    ii = np.arange(1, ni)
    jj = np.arange(1, nj)
    if len(ii) == 0 or len(jj) == 0:
        return GridArray(interval, np.zeros((0, 2)), np.zeros((0, 2), dtype=np.int64))
    I, J = np.meshgrid(ii, jj, indexing="ij")
    I, J = I.ravel(), J.ravel()
    pts = np.stack([(I + 0.5) * interval, (J + 0.5) * interval], axis=1)
    cols = np.floor(pts[:, 0] * r).astype(np.int64)
    rows = np.floor(h - pts[:, 1] * r).astype(np.int64)
    ok = (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h) & (pts[:, 0] < X) & (pts[:, 1] < Y)
    keep = np.zeros(len(pts), dtype=bool)
    keep[ok] = codes[rows[ok], cols[ok]] == WALKABLE
    return GridArray(interval, pts[keep], np.stack([I[keep], J[keep]], axis=1))


def compile_codes(codes: np.ndarray, resolution_r: float, interval_I_M: float, floor_id: int = 0) -> FloorPlanMap:
    """Compile a class-code raster (see ``WALKABLE`` etc.) into a map."""
    codes = np.ascontiguousarray(codes, dtype=np.uint8)
    if codes.ndim != 2 or codes.shape[0] < 2 or codes.shape[1] < 2:
        raise ConfigError("raster must be at least 2x2 pixels")
    if codes.max() > FTA:
        raise ConfigError("class codes must be in 0..3")
    if not resolution_r > 0:
        raise ConfigError("resolution_r must be positive")
    if not interval_I_M > 1.0 / resolution_r:
        raise ConfigError("interval_I_M must exceed one pixel (1/resolution_r)")
    if not np.any(codes == WALKABLE):
        raise DegenerateMap("raster has no walkable pixels")
    h = codes.shape[0]

    passable = (codes == WALKABLE) | (codes == FTA)
    room_labels, n_rooms = ndimage.label(passable)  # 4-connectivity
    blocked_all = np.ascontiguousarray(~passable, dtype=np.uint8)
    blocked_wall = np.ascontiguousarray(codes == WALL, dtype=np.uint8)

    contours: list[Contour] = []
    room_contour, room_area, room_bbox = {}, {}, {}
    slices = ndimage.find_objects(room_labels)
    for rid in range(1, n_rooms + 1):
        sl = slices[rid - 1]
        sub = room_labels[sl] == rid
        loops = _trace_loops(sub)
        off = np.array([sl[1].start, sl[0].start], dtype=float)
        loops = [lp + off for lp in loops]
        areas = [abs(geometry.polygon_area(lp)) for lp in loops]
        outer = int(np.argmax(areas))
        order = [outer] + [i for i in range(len(loops)) if i != outer]
        for k, li in enumerate(order):
            verts = loops[li]
            kind = ContourKind.ROOM_BOUNDARY if k == 0 else ContourKind.INTERIOR_OBSTACLE
            mcs = np.stack([verts[:, 0] / resolution_r, (h - verts[:, 1]) / resolution_r], axis=1)
            verts.setflags(write=False)
            mcs.setflags(write=False)
            if k == 0:
                room_contour[rid] = len(contours)
                room_area[rid] = areas[li]
                room_bbox[rid] = (verts[:, 0].min(), verts[:, 1].min(), verts[:, 0].max(), verts[:, 1].max())
            contours.append(Contour(verts, kind, rid, mcs))

    door_labels, n_doors = ndimage.label(codes == DOOR, structure=np.ones((3, 3), dtype=int))
    door_rooms: dict[int, tuple] = {}
    if n_doors:
        pairs = set()
        hh, ww = codes.shape
        for dr in (-1, 0, 1):
            for dc in (-1, 0, 1):
                shifted = np.zeros_like(room_labels)
                ys = slice(max(0, -dr), hh - max(0, dr))
                xs = slice(max(0, -dc), ww - max(0, dc))
                yd = slice(max(0, dr), hh - max(0, -dr))
                xd = slice(max(0, dc), ww - max(0, -dc))
                shifted[ys, xs] = room_labels[yd, xd]
                m = (door_labels > 0) & (shifted > 0)
                pairs.update(zip(door_labels[m].tolist(), shifted[m].tolist()))
        for d in range(1, n_doors + 1):
            door_rooms[d] = tuple(sorted(r for dd, r in pairs if dd == d))

    grid = _build_grid(codes, float(resolution_r), float(interval_I_M))
    for arr in (codes, room_labels, door_labels, blocked_all, blocked_wall, grid.points, grid.index):
        arr.setflags(write=False)
    return FloorPlanMap(
        codes=codes,
        resolution_r=float(resolution_r),
        floor_id=int(floor_id),
        contours=tuple(contours),
        grid=grid,
        room_labels=room_labels,
        door_labels=door_labels,
        door_rooms=door_rooms,
        blocked_all=blocked_all,
        blocked_wall=blocked_wall,
        room_contour=room_contour,
        _room_area=room_area,
        _room_bbox=room_bbox,
    )


def compile_map(raster, resolution_r: float, interval_I_M: float, floor_id: int = 0) -> FloorPlanMap:
    """Classify a stylized raster and compile it into a ``FloorPlanMap``."""
    if not isinstance(raster, StylizedRaster):
        raster = StylizedRaster(np.asarray(raster, dtype=np.uint8))
    return compile_codes(raster.classify(), resolution_r, interval_I_M, floor_id)
