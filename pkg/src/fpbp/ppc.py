"""Post-position correction (PPC).

After each fused estimate the step from the previous output is raycast
against the floor plan. A blocked step is either rotated to the smallest
candidate angle that clears the obstacle (Case 1), shortened to stop just
before it (Case 2), or, when a door is approached head-on and the BLE fix
already sits in another room, moved through the door (Case 3). Particles
are shifted by the same correction.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, NormalUnavailable, ZeroGradient
from .floorplan import DOOR, FTA, WALKABLE, FloorPlanMap, MapFeature
from .geometry import included_angle, rotate

NO_HIT, CASE_ROTATE, CASE_BLOCKED, CASE_DOOR = 0, 1, 2, 3


@dataclass(frozen=True)
class PpcConfig:
    delta_phi: float = math.radians(5.0)
    N_angles: int = 12
    alpha0: float = math.radians(45.0)
    scale_f: float = 1.5
    epsilon: float = 0.1
    case2_streak_limit: int = 3
    raycast_delta: Optional[float] = None  # sampled raycast step; None -> 0.5 / r
    global_contour_search: bool = False

    def __post_init__(self):
        if not self.delta_phi > 0 or self.N_angles < 1:
            raise ConfigError("delta_phi must be positive and N_angles >= 1")
        if self.delta_phi * self.N_angles > math.pi / 2 + self.delta_phi + 1e-12:
            raise ConfigError("candidate angles must stay within +-(pi/2 + delta_phi)")
        if self.scale_f < 1:
            raise ConfigError("scale_f must be >= 1")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be positive")
        if self.case2_streak_limit < 1:
            raise ConfigError("case2_streak_limit must be >= 1")

    def delta_for(self, fmap: FloorPlanMap) -> float:
        delta = 0.5 / fmap.resolution_r if self.raycast_delta is None else self.raycast_delta
        if not 0 < delta < 1.0 / fmap.resolution_r:
            raise ConfigError("raycast_delta must lie in (0, 1/r)")
        return delta


@dataclass
class PpcState:
    case2_streak: int = 0
    current_room: Optional[int] = None
    last_output: Optional[np.ndarray] = None


@dataclass(frozen=True)
class RaycastResult:
    hit: bool
    hit_point: Optional[np.ndarray] = None
    pixel: Optional[tuple] = None  # (col, row) of the blocking pixel
    code: Optional[int] = None  # class code of the blocking pixel

    def __bool__(self):
        return self.hit


def raycast(fmap: FloorPlanMap, x1, x2, walls_only: bool = False) -> RaycastResult:
    """Exact traversal of every pixel the segment touches.

    ``hit_point`` is where the segment enters the first blocked pixel, so it
    lies on that pixel's near face.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    res = fmap.trace(x1, x2, walls_only=walls_only)
    if res is None:
        return RaycastResult(False)
    t, col, row = res
    return RaycastResult(True, x1 + t * (x2 - x1), (col, row), fmap.code_of_pixel(col, row))


def raycast_sampled(fmap: FloorPlanMap, x1, x2, delta: float) -> RaycastResult:
    """Incremental sampling every ``delta`` meters from ``x1`` to ``x2``.

    Samples ``round(L / delta) + 1`` evenly spaced points, endpoints
    included, and reports the first one on a wall or door. FTA (feature
    0.25) is passable here exactly as in ``raycast``.
    """
    x1 = np.asarray(x1, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    length = float(np.linalg.norm(x2 - x1))
    n = int(round(length / delta)) + 1 if length > 0 else 1
    ts = np.linspace(0.0, 1.0, n) if n > 1 else np.zeros(1)
    pts = x1 + ts[:, None] * (x2 - x1)
    feats = fmap.features_at(pts)
    blocked = np.flatnonzero(feats >= MapFeature.DOOR)
    if len(blocked) == 0:
        return RaycastResult(False)
    p = pts[blocked[0]]
    col, row = fmap.pixel_of(p)
    return RaycastResult(True, p, (col, row), fmap.code_of_pixel(col, row))


def candidate_angles(delta_phi: float, n: int) -> list[float]:
    """[+d, -d, +2d, -2d, ...]: ascending magnitude, positive first."""
    out = []
    for j in range(1, n + 1):
        out += [j * delta_phi, -j * delta_phi]
    return out


def incident_angle(normal, step) -> float:
    """Angle between the surface normal and the reversed step, in [0, pi]."""
    return included_angle(np.asarray(normal, dtype=float), -np.asarray(step, dtype=float))


def normal_near_hit(fmap: FloorPlanMap, prev, hit: RaycastResult) -> np.ndarray:
    """Surface normal of the obstacle at a hit.

    Evaluated at the free side of the hit point so that thin (one-pixel)
    obstacles still produce a gradient.
    """
    prev = np.asarray(prev, dtype=float)
    d = hit.hit_point - prev
    n = float(np.linalg.norm(d))
    back = hit.hit_point - (d / n) * (0.25 / fmap.resolution_r) if n > 0 else hit.hit_point
    for p in (back, hit.hit_point):
        try:
            return fmap.surface_normal_at(p)
        except ZeroGradient:
            continue
    raise NormalUnavailable("no usable surface normal at the hit point")


@dataclass(frozen=True)
class CorrectionPlan:
    needs_yaw: bool
    filtered_Phi: tuple
    door_context: Optional[dict] = None


def plan_correction(fmap: FloorPlanMap, prev, step_hat, hit: RaycastResult,
                    config: PpcConfig) -> CorrectionPlan:
    """Decide between yaw correction and a door-passage check."""
    Phi = candidate_angles(config.delta_phi, config.N_angles)
    if hit.code != DOOR:
        return CorrectionPlan(True, tuple(Phi))
    try:
        n = normal_near_hit(fmap, prev, hit)
    except NormalUnavailable:
        return CorrectionPlan(True, tuple(Phi))
    alpha = incident_angle(n, step_hat)
    ctx = {"normal": n, "alpha": alpha, "door_id": int(fmap.door_labels[hit.pixel[1], hit.pixel[0]])}
    if alpha <= config.alpha0:
        return CorrectionPlan(False, tuple(Phi), ctx)
    a_plus = incident_angle(n, rotate(step_hat, config.delta_phi))
    a_minus = incident_angle(n, rotate(step_hat, -config.delta_phi))
    keep = [p for p in Phi if (p > 0 if a_plus > a_minus else p < 0)]
    return CorrectionPlan(True, tuple(keep), ctx)


def find_optimal_rotation(fmap: FloorPlanMap, prev, step_hat, Phi, f: float) -> Optional[float]:
    """First angle in ``Phi`` whose f-scaled rotated probe is unobstructed."""
    prev = np.asarray(prev, dtype=float)
    for phi in Phi:
        t_phi = prev + rotate(f * np.asarray(step_hat, dtype=float), phi)
        if not raycast(fmap, prev, t_phi):
            return phi
    return None


@dataclass
class CorrectionResult:
    position: np.ndarray
    case: int
    hit: Optional[np.ndarray] = None
    phi_star: Optional[float] = None
    room_id: Optional[int] = None
    reset: bool = False
    hit_code: Optional[int] = None

    def trace_record(self, t_ms: int) -> dict:
        return {
            "t_ms": int(t_ms),
            "case": self.case,
            "hit": None if self.hit is None else [float(self.hit[0]), float(self.hit[1])],
            "hit_code": self.hit_code,
            "phi_star_deg": None if self.phi_star is None else math.degrees(self.phi_star),
            "room_id": self.room_id,
            "reset": self.reset,
        }


def _blocked_back_off(fmap: FloorPlanMap, prev, step_hat, hit: RaycastResult, eps: float) -> np.ndarray:
    """Case 2 position h - eps*s, falling back to the last free point before h."""
    cand = hit.hit_point - eps * step_hat
    if not raycast(fmap, prev, cand) and fmap.is_passable(cand):
        return cand
    # the back-off overshot prev; stay on the free part of the segment
    d = hit.hit_point - prev
    n = float(np.linalg.norm(d))
    if n == 0:
        return np.array(prev, dtype=float)
    back = max(n - 0.25 / fmap.resolution_r, 0.0)
    return prev + d * (back / n)


def _door_target_rooms(fmap: FloorPlanMap, door_id: int, current_room) -> list[int]:
    rooms = [r for r in fmap.door_rooms.get(door_id, ()) if r != current_room]
    return rooms


def _passage_point(fmap: FloorPlanMap, prev, step_hat, hit: RaycastResult, targets, config: PpcConfig):
    """Case 3 landing point x_c + eps*s, or None if no verified point exists."""
    eps_step = config.epsilon * step_hat
    ok_rooms = set(targets) if targets else None

    def acceptable(p):
        if not fmap.is_passable(p):
            return False
        room = fmap.room_of(p)
        if room is None or (ok_rooms is not None and room not in ok_rooms):
            return False
        return not raycast(fmap, prev, p, walls_only=True)

    if targets and not config.global_contour_search:
        cids = [c for r in targets for c in fmap.contours_of_room(r)]
    else:
        cids = [c for c in range(len(fmap.contours)) if fmap.contours[c].room_id != fmap.room_of(prev)]
    if cids:
        x_c = fmap.closest_contour_point(hit.hit_point, cids)
        cand = x_c + eps_step
        if acceptable(cand):
            return cand
    # fall back to where the step ray leaves the door
    unit = step_hat / np.linalg.norm(step_hat)
    ds = 0.5 / fmap.resolution_r
    p = hit.hit_point.copy()
    for _ in range(int(2.0 * fmap.resolution_r / 0.5) + 1):
        p = p + unit * ds
        if not fmap.in_bounds(p):
            break
        code = fmap.code_at(p)
        if code in (WALKABLE, FTA):
            cand = p + eps_step
            return cand if acceptable(cand) else (p if acceptable(p) else None)
        if code != DOOR:
            break
    return None


def correct(fmap: FloorPlanMap, prev, estimate, ble_fix, particles, config: PpcConfig,
            state: PpcState, ble_raw=None) -> CorrectionResult:
    """Correct one fused estimate and shift the particles accordingly.

    ``ble_fix`` is the latest BLE position (x_B); ``ble_raw`` its unsmoothed
    grid point, used where the smoothed fix does not land in a room.
    """
    prev = np.asarray(prev, dtype=float)
    estimate = np.asarray(estimate, dtype=float)
    step_hat = estimate - prev
    state.current_room = fmap.room_of(prev)
    hit = raycast(fmap, prev, estimate) if np.any(step_hat != 0) else RaycastResult(False)
    if not hit or np.array_equal(hit.hit_point, prev):
        state.case2_streak = 0
        return _finish(fmap, CorrectionResult(estimate.copy(), NO_HIT), estimate, particles, state)

    plan = plan_correction(fmap, prev, step_hat, hit, config)
    phi_star = None
    if plan.needs_yaw:
        phi_star = find_optimal_rotation(fmap, prev, step_hat, plan.filtered_Phi, config.scale_f)
        final = None
        if phi_star is not None:
            cand = prev + rotate(step_hat, phi_star)
            if not raycast(fmap, prev, cand):
                final, case = cand, CASE_ROTATE
        if final is None:
            final, case = _blocked_back_off(fmap, prev, step_hat, hit, config.epsilon), CASE_BLOCKED
    else:
        fix_room = _fix_room(fmap, ble_fix, ble_raw)
        final = None
        if fix_room is not None and fix_room != state.current_room:
            targets = _door_target_rooms(fmap, plan.door_context["door_id"], state.current_room)
            final = _passage_point(fmap, prev, step_hat, hit, targets, config)
        if final is not None:
            case = CASE_DOOR
        else:
            final, case = _blocked_back_off(fmap, prev, step_hat, hit, config.epsilon), CASE_BLOCKED

    if case == CASE_BLOCKED:
        state.case2_streak += 1
        if state.case2_streak >= config.case2_streak_limit and ble_fix is not None:
            target = np.asarray(ble_fix, dtype=float)
            if not fmap.is_passable(target) and ble_raw is not None:
                target = np.asarray(ble_raw, dtype=float)
            state.case2_streak = 0
            res = CorrectionResult(target.copy(), CASE_BLOCKED, hit.hit_point, None, reset=True,
                                   hit_code=hit.code)
            return _finish(fmap, res, estimate, particles, state)
    else:
        state.case2_streak = 0
    res = CorrectionResult(np.asarray(final, dtype=float), case, hit.hit_point, phi_star, hit_code=hit.code)
    return _finish(fmap, res, estimate, particles, state)


def _fix_room(fmap: FloorPlanMap, ble_fix, ble_raw):
    for p in (ble_raw, ble_fix):
        if p is None:
            continue
        room = fmap.room_of(np.asarray(p, dtype=float))
        if room is not None:
            return room
    return None


def _finish(fmap, res: CorrectionResult, estimate, particles, state: PpcState) -> CorrectionResult:
    if particles is not None and res.case != NO_HIT:
        particles.translate(res.position - estimate)
    room = fmap.room_of(res.position)
    if room is not None:
        state.current_room = room
    res.room_id = state.current_room
    state.last_output = res.position.copy()
    return res
