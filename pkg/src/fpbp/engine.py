"""Online session: BLE estimation cadence, step fusion, correction and floors.

Events are replayed in timestamp order (RSSI before IMU/steps at equal
timestamps). BLE fixes are produced at the end of every 250 ms window; each
step event runs propagate -> reweight -> resample -> estimate -> correct.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

import numpy as np

from . import radio
from .errors import AllZeroWeights, ConfigError, InsufficientBeacons, NoCandidates, SingularGeometry
from .floorplan import FTA, FloorPlanMap
from .fusion import ParticleConfig, ParticleSet
from .pdr import ImuSample, PdrProcessor, StepEvent
from .ppc import NO_HIT, PpcConfig, PpcState, correct

ALGORITHMS = ("fpbp", "bp", "pdr", "gml", "gimle", "trilateration", "frbw")
INITIALIZING, TRACKING, FLOOR_TRANSITION = "Initializing", "Tracking", "FloorTransition"


@dataclass(frozen=True)
class FloorTransitionPolicy:
    fta_dwell_required: int = 4
    cross_floor_beacon_margin: float = 6.0  # dB
    min_cross_floor_beacons: int = 3
    fta_proximity: float = 1.0  # m; how close to an FTA pixel counts as "in" it

    def __post_init__(self):
        if self.fta_dwell_required < 1 or self.min_cross_floor_beacons < 1:
            raise ConfigError("floor-transition counts must be >= 1")


@dataclass(frozen=True)
class EngineConfig:
    algorithm: str = "fpbp"
    interval_ms: int = 250
    init_ms: int = 2000
    rssi_max_age_ms: int = 1000
    q_K: float = 0.16
    r_K: float = 16.0
    path_loss: radio.PathLossModel = radio.PathLossModel()
    gml: radio.GmlConfig = radio.GmlConfig()
    particles: ParticleConfig = ParticleConfig()
    ppc: PpcConfig = PpcConfig()
    floors: FloorTransitionPolicy = FloorTransitionPolicy()
    frbw_g: float = 5.0
    pdr: dict = field(default_factory=dict)  # PdrProcessor keyword arguments
    map_yaw: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ConfigError(f"unknown algorithm {self.algorithm!r}; choose from {ALGORITHMS}")
        if self.interval_ms <= 0 or self.init_ms < self.interval_ms:
            raise ConfigError("interval_ms must be positive and init_ms >= interval_ms")

    @property
    def init_fixes(self) -> int:
        return self.init_ms // self.interval_ms


@dataclass
class PoseOutput:
    t_ms: int
    position: np.ndarray
    floor: int
    case: int = NO_HIT
    diverged: bool = False
    reset: bool = False
    phase: str = TRACKING

    def record(self) -> dict:
        return {
            "t_ms": int(self.t_ms),
            "x": float(self.position[0]),
            "y": float(self.position[1]),
            "floor": int(self.floor),
            "case": int(self.case),
            "diverged": bool(self.diverged),
            "reset": bool(self.reset),
            "phase": self.phase,
        }


class Session:
    """One positioning session over a set of floor maps."""

    def __init__(self, maps: Mapping[int, FloorPlanMap], registry: radio.BeaconRegistry,
                 config: EngineConfig = EngineConfig(), initial_floor: Optional[int] = None,
                 init_position=None, trace: Optional[Callable[[dict], None]] = None):
        if not maps:
            raise ConfigError("at least one floor map is required")
        self.maps = dict(maps)
        self.registry = registry
        self.config = config
        self.floor = min(self.maps) if initial_floor is None else initial_floor
        if self.floor not in self.maps:
            raise ConfigError(f"no map for floor {self.floor}")
        self.init_position = None if init_position is None else np.asarray(init_position, dtype=float)
        self.trace = trace
        self.pdr = PdrProcessor(map_yaw=config.map_yaw, **config.pdr)
        self.outputs: list[PoseOutput] = []
        self.fixes: list[radio.BleFix] = []
        self.floor_switches: list[tuple[int, int, int]] = []  # (t_ms, from, to)
        self.reinit_count = 0
        self._next_window = config.interval_ms
        self._seed_counter = 0
        self._last_t = -math.inf
        self._reset_floor_state()
        if config.algorithm == "pdr" and self.init_position is not None:
            # dead reckoning from a known start needs no BLE initialization
            self._start_tracking(self.init_position)

    # -- state -----------------------------------------------------------
    def _reset_floor_state(self):
        cfg = self.config
        self.phase = INITIALIZING if not self.outputs and not self.fixes else FLOOR_TRANSITION
        self.rssi = radio.RssiFilterBank(cfg.q_K, cfg.r_K)
        self.smoother = radio.FixSmoother(cfg.gml.smoothing_n)
        self.baseline_smoother = radio.FixSmoother(cfg.gml.smoothing_n)
        self._baseline_fix: Optional[np.ndarray] = None
        self.latest_fix: Optional[radio.BleFix] = None
        self.init_fixes: list[np.ndarray] = []
        self.particles: Optional[ParticleSet] = None
        self.ppc_state = PpcState()
        self.position: Optional[np.ndarray] = None
        self._cross_floor_streak = 0
        self._cross_floor_candidate: Optional[int] = None
        self.floor_registry = self.registry.on_floor(self.floor)

    @property
    def fmap(self) -> FloorPlanMap:
        return self.maps[self.floor]

    @property
    def uses_ble(self) -> bool:
        return self.config.algorithm != "pdr" or self.init_position is None

    # -- event entry points --------------------------------------------------
    def on_rssi(self, t_ms: int, uuid: str, rssi_dbm: float):
        self._advance(t_ms, inclusive=False)
        if uuid in self.registry:
            self.rssi.update(uuid, float(rssi_dbm), int(t_ms))

    def on_rssi_batch(self, readings: Iterable[tuple], t_ms: int) -> Optional[radio.BleFix]:
        """Feed ``(uuid, rssi)`` pairs observed at ``t_ms``; returns any fix closed."""
        n = len(self.fixes)
        for uuid, rssi in readings:
            self.on_rssi(t_ms, uuid, rssi)
        self._advance(t_ms, inclusive=True)
        return self.fixes[-1] if len(self.fixes) > n else None

    def on_imu(self, sample: ImuSample) -> Optional[PoseOutput]:
        self._advance(sample.t_ms, inclusive=True)
        step = self.pdr.push(sample)
        return None if step is None else self._step(step)

    def on_step(self, step: StepEvent) -> Optional[PoseOutput]:
        self._advance(step.t_ms, inclusive=True)
        return self._step(step)

    def finish(self, t_ms: Optional[int] = None):
        if t_ms is not None:
            self._advance(t_ms, inclusive=True)

    def _advance(self, t_ms: int, inclusive: bool):
        if t_ms < self._last_t:
            raise ConfigError("events must arrive in timestamp order")
        self._last_t = t_ms
        while self._next_window < t_ms or (inclusive and self._next_window == t_ms):
            self._close_window(self._next_window)
            self._next_window += self.config.interval_ms

    # -- BLE ------------------------------------------------------------------
    def _close_window(self, t_ms: int):
        if not self.uses_ble and self.phase == TRACKING:
            return
        readings = self.rssi.current(t_ms, self.config.rssi_max_age_ms)
        if self._check_floor_transition(readings, t_ms):
            return
        heard = {u: r for u, r in readings.items() if u in self.floor_registry}
        prev = None if self.latest_fix is None else self.latest_fix.position
        try:
            fix = radio.gml_estimate(self.fmap, self.floor_registry, heard, prev, self.config.gml,
                                     self.smoother, self.config.path_loss, t_ms)
        except (InsufficientBeacons, NoCandidates):
            return
        self.latest_fix = fix
        self.fixes.append(fix)
        base = self._baseline(heard)
        if base is not None:
            # baselines share the GML mean filter so the comparison is like for like
            self._baseline_fix = self.baseline_smoother(base)
        if self.phase != TRACKING:
            self.init_fixes.append(fix.position)
            if len(self.init_fixes) >= self.config.init_fixes:
                self._start_tracking(np.mean(self.init_fixes, axis=0))

    def _baseline(self, heard):
        algo = self.config.algorithm
        try:
            if algo == "gimle":
                return radio.baseline_gimle(self.fmap, self.floor_registry, heard, self.config.path_loss,
                                            self.config.gml.N_select)
            if algo == "trilateration":
                return radio.baseline_trilateration_lls(self.floor_registry, heard, self.config.path_loss)
            if algo == "frbw":
                return radio.baseline_frbw(self.floor_registry, heard, self.config.frbw_g, self.config.path_loss)
        except (InsufficientBeacons, SingularGeometry, NoCandidates):
            return None
        return None

    def _snap(self, p) -> np.ndarray:
        """Nearest walkable grid point (keeps the first corrected step feasible)."""
        pts = self.fmap.grid.points
        p = np.asarray(p, dtype=float)
        if self.fmap.is_walkable(p) or len(pts) == 0:
            return p
        return pts[int(np.argmin(np.sum((pts - p) ** 2, axis=1)))].copy()

    def _start_tracking(self, x0):
        x0 = self._snap(x0)
        if self.config.algorithm == "pdr" and self.init_position is not None and not self.floor_switches:
            x0 = self.init_position.copy()
        self._seed_counter += 1
        self.particles = ParticleSet.init(x0, config=self.config.particles,
                                          seed=(self.config.seed, self._seed_counter))
        self.position = x0.copy()
        self.ppc_state = PpcState(current_room=self.fmap.room_of(x0), last_output=x0.copy())
        self.phase = TRACKING

    # -- floors ------------------------------------------------------------
    def near_fta(self, p) -> bool:
        fmap = self.fmap
        col, row = fmap.pixel_of(p)
        rad = int(math.ceil(self.config.floors.fta_proximity * fmap.resolution_r))
        r0, r1 = max(row - rad, 0), min(row + rad + 1, fmap.height_H_I)
        c0, c1 = max(col - rad, 0), min(col + rad + 1, fmap.width_px)
        if r0 >= r1 or c0 >= c1:
            return False
        return bool(np.any(fmap.codes[r0:r1, c0:c1] == FTA))

    def _position_for_floor_check(self):
        if self.position is not None:
            return self.position
        return None if self.latest_fix is None else self.latest_fix.position

    def check_floor_transition(self, readings: Mapping[str, float]) -> Optional[int]:
        """Update the dwell counter; returns the new floor once it is confirmed."""
        if len(self.maps) < 2:
            return None
        pos = self._position_for_floor_check()
        pol = self.config.floors
        cand = None
        if pos is not None and self.near_fta(pos):
            known = {u: r for u, r in readings.items() if u in self.registry}
            ranked = sorted(known.items(), key=lambda kv: (-kv[1], kv[0]))
            top = ranked[: pol.min_cross_floor_beacons]
            floors = {self.registry[u].floor_id for u, _ in top}
            if len(top) == pol.min_cross_floor_beacons and len(floors) == 1:
                other = floors.pop()
                if other != self.floor and other in self.maps:
                    own = [r for u, r in known.items() if self.registry[u].floor_id == self.floor]
                    best_own = max(own) if own else -math.inf
                    if np.mean([r for _, r in top]) >= best_own + pol.cross_floor_beacon_margin:
                        cand = other
        if cand is None or cand != self._cross_floor_candidate:
            self._cross_floor_streak = 0
        self._cross_floor_candidate = cand
        if cand is None:
            return None
        self._cross_floor_streak += 1
        if self._cross_floor_streak >= pol.fta_dwell_required:
            return cand
        return None

    def _check_floor_transition(self, readings, t_ms) -> bool:
        new = self.check_floor_transition(readings)
        if new is None:
            return False
        old = self.floor
        self.floor = new
        self.floor_switches.append((int(t_ms), old, new))
        self.reinit_count += 1
        self._reset_floor_state()
        self.phase = FLOOR_TRANSITION
        if self.trace:
            self.trace({"t_ms": int(t_ms), "event": "floor_switch", "from": old, "to": new})
        return True

    def state_snapshot(self) -> dict:
        """Inspection hook listing the floor-dependent state."""
        return {
            "floor": self.floor,
            "phase": self.phase,
            "map_floor": self.fmap.floor_id,
            "registry_floors": sorted({b.floor_id for b in self.floor_registry}),
            "rssi_filters": len(self.rssi.states),
            "smoother_history": len(self.smoother.history),
            "init_fixes": len(self.init_fixes),
            "particles": None if self.particles is None else self.particles.snapshot(),
            "ppc": {"case2_streak": self.ppc_state.case2_streak, "current_room": self.ppc_state.current_room},
        }

    # -- steps -------------------------------------------------------------
    def _fresh_fix(self, t_ms) -> Optional[radio.BleFix]:
        fix = self.latest_fix
        if fix is None or t_ms - fix.timestamp > self.config.particles.stale_ms:
            return None
        return fix

    def _emit(self, out: PoseOutput) -> PoseOutput:
        self.outputs.append(out)
        return out

    def _step(self, step: StepEvent) -> PoseOutput:
        algo = self.config.algorithm
        if self.phase != TRACKING:
            # steps are dropped until initialization completes
            pos = self.latest_fix.position if self.latest_fix is not None else np.full(2, np.nan)
            return self._emit(PoseOutput(step.t_ms, np.array(pos, dtype=float), self.floor, phase=self.phase))
        if algo in ("gml", "gimle", "trilateration", "frbw"):
            if algo == "gml":
                pos = self.latest_fix.position
            else:
                pos = self._baseline_fix
                pos = self.latest_fix.position if pos is None else pos
            return self._emit(PoseOutput(step.t_ms, np.array(pos, dtype=float), self.floor))
        if algo == "pdr":
            self.position = self.position + step.vector
            return self._emit(PoseOutput(step.t_ms, self.position.copy(), self.floor))

        ps = self.particles
        prev = self.position
        diverged = False
        ps.propagate(step.length_s, step.yaw_theta)
        fix = self._fresh_fix(step.t_ms)
        if fix is not None:
            try:
                ps.reweight(fix.position)
            except AllZeroWeights:
                diverged = True
                ps.reset(self._snap(fix.position))
        ps.resample()
        est = ps.estimate()
        if diverged:
            self.position = est.copy()
            self.ppc_state = PpcState(current_room=self.fmap.room_of(est), last_output=est.copy())
            return self._emit(PoseOutput(step.t_ms, est, self.floor, diverged=True))
        if algo == "bp":
            self.position = est
            return self._emit(PoseOutput(step.t_ms, est.copy(), self.floor))
        res = correct(self.fmap, prev, est,
                      None if fix is None else fix.position, ps, self.config.ppc, self.ppc_state,
                      None if fix is None else fix.raw)
        self.position = res.position
        if self.trace:
            self.trace(res.trace_record(step.t_ms))
        return self._emit(PoseOutput(step.t_ms, res.position.copy(), self.floor, res.case, reset=res.reset))


def replay(session: Session, events: Iterable[dict]) -> list[PoseOutput]:
    """Drive a session from decoded event-log records (already time-ordered)."""
    last_t = None
    for ev in events:
        kind = ev.get("type")
        t = int(ev["t_ms"])
        last_t = t
        if kind == "rssi":
            session.on_rssi(t, ev["uuid"], ev["rssi_dbm"])
        elif kind == "step":
            session.on_step(StepEvent(t, float(ev["step_len"]), float(ev["yaw"])))
        elif kind == "imu":
            session.on_imu(ImuSample(
                t,
                _vec(ev.get("acc")), _vec(ev.get("acc_g")), _vec(ev.get("gyro")),
                _vec(ev.get("mag")), _vec(ev.get("quat")),
            ))
        else:
            raise ConfigError(f"unknown event type {kind!r}")
    if last_t is not None:
        session.finish(last_t)
    return session.outputs


def _vec(v):
    return None if v is None else np.asarray(v, dtype=float)
