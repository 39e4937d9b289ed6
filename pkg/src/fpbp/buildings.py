"""Programmatic test buildings and random maps.

Each builder paints class codes on a canvas in map coordinates and returns
the compiled map(s), a beacon registry and a default waypoint list.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .floorplan import DOOR, FTA, WALKABLE, WALL, FloorPlanMap, compile_codes
from .radio import Beacon, BeaconRegistry


class Canvas:
    """Class-code raster addressed in meters (MCS, y up)."""

    def __init__(self, width_m: float, height_m: float, r: float = 10.0, border: float = 0.2):
        self.r = r
        self.codes = np.zeros((int(round(height_m * r)), int(round(width_m * r))), dtype=np.uint8)
        if border > 0:
            self.rect(0, 0, width_m, border, WALL)
            self.rect(0, height_m - border, width_m, height_m, WALL)
            self.rect(0, 0, border, height_m, WALL)
            self.rect(width_m - border, 0, width_m, height_m, WALL)

    def rect(self, x0, y0, x1, y1, code=WALL):
        h = self.codes.shape[0]
        c0, c1 = int(round(min(x0, x1) * self.r)), int(round(max(x0, x1) * self.r))
        r0, r1 = int(round(h - max(y0, y1) * self.r)), int(round(h - min(y0, y1) * self.r))
        self.codes[max(r0, 0):max(r1, 0), max(c0, 0):max(c1, 0)] = code
        return self

    def hwall(self, y, x0, x1, t=0.2):
        return self.rect(x0, y - t / 2, x1, y + t / 2, WALL)

    def vwall(self, x, y0, y1, t=0.2):
        return self.rect(x - t / 2, y0, x + t / 2, y1, WALL)

    def hdoor(self, y, x0, x1, t=0.2):
        return self.rect(x0, y - t / 2, x1, y + t / 2, DOOR)

    def vdoor(self, x, y0, y1, t=0.2):
        return self.rect(x - t / 2, y0, x + t / 2, y1, DOOR)

    def compile(self, interval: float = 0.3, floor_id: int = 0) -> FloorPlanMap:
        return compile_codes(self.codes, self.r, interval, floor_id)


@dataclass
class Building:
    maps: dict
    registry: BeaconRegistry
    waypoints: list  # (x, y, floor, dwell_s)


def _beacons(points, floor=0, prefix="b"):
    return [Beacon(f"{prefix}{floor}-{i:02d}", (float(x), float(y)), floor) for i, (x, y) in enumerate(points)]


def four_rooms_corridor(r: float = 10.0, interval: float = 0.3) -> Building:
    """30 x 16 m: two rooms above and two below a 2 m east-west corridor."""
    c = Canvas(30, 16, r)
    c.hwall(7, 0, 30).hwall(9, 0, 30)
    c.vwall(15, 0, 7).vwall(15, 9, 16)
    for x0 in (6.0, 22.0):
        c.hdoor(7, x0, x0 + 1.2)
        c.hdoor(9, x0, x0 + 1.2)
    fmap = c.compile(interval)
    pts = [
        (3.0, 2.0), (12.0, 5.0),  # SW room
        (18.0, 2.0), (27.0, 5.0),  # SE room
        (3.0, 14.0), (12.0, 11.0),  # NW room
        (18.0, 14.0), (27.0, 11.0),  # NE room
        (2.0, 8.7), (10.5, 7.3), (19.5, 8.7), (28.0, 7.3),  # corridor walls
    ]
    lap = [
        (3.0, 3.0), (6.6, 3.0), (6.6, 8.0), (6.6, 13.0), (12.0, 13.0), (12.0, 11.0),
        (6.6, 11.0), (6.6, 8.0), (22.6, 8.0), (22.6, 13.0), (27.0, 13.0), (27.0, 11.0),
        (22.6, 11.0), (22.6, 8.0), (22.6, 3.0), (27.0, 3.0), (27.0, 5.0), (22.6, 5.0),
        (22.6, 8.0), (6.6, 8.0), (6.6, 3.0), (3.0, 3.0),
    ]
    wps = [(x, y, 0, 0.0) for x, y in lap] + [(x, y, 0, 0.0) for x, y in lap[1:]]
    return Building({0: fmap}, BeaconRegistry(_beacons(pts)), wps)


def two_rooms(r: float = 10.0, interval: float = 0.3) -> Building:
    """12 x 6 m, split by a wall at x = 6 with a 1.2 m door."""
    c = Canvas(12, 6, r)
    c.vwall(6, 0, 6)
    c.vdoor(6, 2.4, 3.6)
    fmap = c.compile(interval)
    pts = [(1.0, 1.0), (5.0, 1.0), (1.0, 5.0), (5.0, 5.0), (7.0, 1.0), (11.0, 1.0), (7.0, 5.0), (11.0, 5.0)]
    wps = [
        (2.0, 3.0, 0, 0.0), (4.0, 4.2), (3.0, 3.0), (9.5, 3.0), (10.0, 4.5), (10.0, 1.5),
        (8.5, 1.5), (8.5, 3.0), (2.5, 3.0), (2.5, 1.5), (4.5, 1.5),
    ]
    wps = [w if len(w) == 4 else (w[0], w[1], 0, 0.0) for w in wps]
    return Building({0: fmap}, BeaconRegistry(_beacons(pts)), wps)


def elevator_floors(r: float = 10.0, interval: float = 0.3, ride_s: float = 3.0,
                    hold_s: float = 8.0) -> Building:
    """Two 20 x 8 m floors sharing an elevator (FTA) at the east end."""
    maps = {}
    beacons = []
    for floor in (0, 1):
        c = Canvas(20, 8, r)
        c.vwall(10, 0, 3)  # a partial wall to give PPC something to do
        c.rect(17.6, 2.8, 19.8, 3.0, WALL).rect(17.6, 5.0, 19.8, 5.2, WALL)
        c.rect(17.8, 3.0, 19.8, 5.0, FTA)
        maps[floor] = c.compile(interval, floor)
        shift = 0.5 * floor
        pts = [(2.0 + shift, 1.5), (2.0, 6.5 - shift), (8.0, 6.5), (12.0 - shift, 1.5), (15.0, 6.5), (18.8, 6.0 + shift)]
        beacons += _beacons(pts, floor)
    wps = [
        (2.0, 4.0, 0, 0.0), (9.0, 4.0, 0, 0.0), (16.0, 4.0, 0, 0.0), (18.8, 4.0, 0, ride_s),
        (18.8, 4.0, 1, hold_s), (16.0, 4.0, 1, 0.0), (3.0, 4.0, 1, 0.0),
    ]
    return Building(maps, BeaconRegistry(beacons), wps)


def random_codes(rng: np.random.Generator, width: int = 100, height: int = 100,
                 n_walls: int = 12, door_prob: float = 0.3, fta_prob: float = 0.1) -> np.ndarray:
    """Random raster: border wall plus axis-aligned wall runs, some with doors."""
    codes = np.zeros((height, width), dtype=np.uint8)
    codes[0, :] = codes[-1, :] = WALL
    codes[:, 0] = codes[:, -1] = WALL
    for _ in range(n_walls):
        t = int(rng.integers(1, 4))
        if rng.random() < 0.5:
            row = int(rng.integers(2, height - 2 - t))
            c0, c1 = sorted(int(v) for v in rng.integers(0, width, 2))
            codes[row:row + t, c0:c1 + 1] = WALL
            if rng.random() < door_prob and c1 - c0 > 8:
                d0 = int(rng.integers(c0 + 1, c1 - 6))
                codes[row:row + t, d0:d0 + 5] = DOOR
        else:
            col = int(rng.integers(2, width - 2 - t))
            r0, r1 = sorted(int(v) for v in rng.integers(0, height, 2))
            codes[r0:r1 + 1, col:col + t] = WALL
            if rng.random() < door_prob and r1 - r0 > 8:
                d0 = int(rng.integers(r0 + 1, r1 - 6))
                codes[d0:d0 + 5, col:col + t] = DOOR
    if rng.random() < fta_prob:
        rr, cc = int(rng.integers(5, height - 10)), int(rng.integers(5, width - 10))
        block = codes[rr:rr + 5, cc:cc + 5]
        block[block == WALKABLE] = FTA
    # a few diagonal walls exercise corner traversal
    for _ in range(int(rng.integers(0, 3))):
        x, y = int(rng.integers(5, width - 25)), int(rng.integers(5, height - 25))
        for k in range(int(rng.integers(5, 20))):
            codes[y + k, x + k] = WALL
    if not np.any(codes == WALKABLE):
        codes[1, 1] = WALKABLE
    return codes


def random_map(seed: int, width: int = 100, height: int = 100, r: float = 10.0,
               interval: float = 0.3) -> FloorPlanMap:
    rng = np.random.Generator(np.random.Philox(seed))
    return compile_codes(random_codes(rng, width, height), r, interval)


def walkable_points(fmap: FloorPlanMap, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform random points inside walkable pixels."""
    rows, cols = np.nonzero(fmap.codes == WALKABLE)
    k = rng.integers(0, len(rows), n)
    u = rng.random((n, 2))
    x = (cols[k] + u[:, 0]) / fmap.resolution_r
    y = (fmap.height_H_I - rows[k] - u[:, 1]) / fmap.resolution_r
    return np.stack([x, y], axis=1)


def beacon_ring(center, radius: float, n: int, floor: int = 0, prefix: str = "b") -> list[Beacon]:
    return [
        Beacon(f"{prefix}{floor}-{i:02d}",
               (center[0] + radius * math.cos(2 * math.pi * i / n), center[1] + radius * math.sin(2 * math.pi * i / n)),
               floor)
        for i in range(n)
    ]
