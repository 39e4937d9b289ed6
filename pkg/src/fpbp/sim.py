"""Scenario simulation and evaluation metrics.

Ground truth walks a waypoint polyline at constant speed with fixed-stride
steps. RSSI follows the log-distance model over the 3-D beacon distance
(beacons on the ceiling, phone in hand, floors stacked), and steps are
emitted either as direct ``{step_len, yaw}`` records or as a 60 Hz
synthetic IMU stream for the step detector.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import ConfigError, InfeasiblePath, LengthMismatch
from .floorplan import FloorPlanMap
from .radio import BeaconRegistry, PathLossModel

EVENT_ORDER = {"rssi": 0, "imu": 1, "step": 1}


@dataclass(frozen=True)
class Waypoint:
    x: float
    y: float
    floor: int = 0
    dwell_s: float = 0.0


@dataclass(frozen=True)
class RadioSim:
    beacon_height: float = 2.5
    device_height: float = 1.2
    floor_height: float = 3.5
    floor_attenuation: float = 15.0  # dB per floor crossed
    rx_floor: float = -95.0  # readings below this are not heard
    interval_ms: int = 200


@dataclass(frozen=True)
class StepNoise:
    heading_std: float = math.radians(3.0)
    length_std: float = 0.03
    heading_drift: float = 0.0  # rad added per step, accumulating
    heading_bias: float = 0.0


@dataclass
class Scenario:
    maps: dict
    registry: BeaconRegistry
    waypoints: list
    speed: float = 1.0
    stride: float = 0.6
    path_loss: PathLossModel = PathLossModel()
    radio: RadioSim = RadioSim()
    noise: StepNoise = StepNoise()
    init_dwell_s: float = 2.0
    max_steps: Optional[int] = None
    seed: int = 0
    imu_mode: bool = False
    imu_rate_hz: float = 60.0
    imu_amplitude: float = 2.0

    def __post_init__(self):
        self.waypoints = [w if isinstance(w, Waypoint) else Waypoint(*w) for w in self.waypoints]
        if not self.speed > 0 or not self.stride > 0:
            raise ConfigError("speed and stride must be positive")
        if len(self.waypoints) < 1:
            raise ConfigError("scenario needs at least one waypoint")
        for w in self.waypoints:
            if w.floor not in self.maps:
                raise ConfigError(f"waypoint on floor {w.floor} has no map")


@dataclass(frozen=True)
class TruthStep:
    t_ms: int
    position: np.ndarray
    floor: int
    vector: np.ndarray


@dataclass
class Truth:
    knot_t: np.ndarray  # ms
    knot_xy: np.ndarray
    knot_floor: np.ndarray
    steps: list
    start: np.ndarray
    end_ms: int

    def at(self, t_ms) -> tuple[np.ndarray, np.ndarray]:
        """Positions and floors at the given times (piecewise linear)."""
        t = np.asarray(t_ms, dtype=float)
        x = np.interp(t, self.knot_t, self.knot_xy[:, 0])
        y = np.interp(t, self.knot_t, self.knot_xy[:, 1])
        idx = np.clip(np.searchsorted(self.knot_t, t, side="right") - 1, 0, len(self.knot_t) - 1)
        return np.stack([x, y], axis=-1), self.knot_floor[idx]

    @property
    def step_positions(self) -> np.ndarray:
        return np.array([s.position for s in self.steps]).reshape(-1, 2)

    @property
    def step_floors(self) -> np.ndarray:
        return np.array([s.floor for s in self.steps], dtype=int)


def _rng(seed, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def generate_truth(scenario: Scenario) -> Truth:
    """Timestamped truth knots and the step schedule.

    Each walking segment is stepped on its own, so steps never cut corners;
    the last step of a segment covers the remainder.
    """
    wps = scenario.waypoints
    t = 0.0
    w0 = wps[0]
    knots = [(t, w0.x, w0.y, w0.floor)]
    t += (scenario.init_dwell_s + w0.dwell_s) * 1000.0
    knots.append((t, w0.x, w0.y, w0.floor))
    steps: list[TruthStep] = []
    seg_idx = 0
    for a, b in zip(wps[:-1], wps[1:]):
        if a.floor != b.floor:
            knots.append((t, b.x, b.y, b.floor))
        else:
            p0, p1 = np.array([a.x, a.y]), np.array([b.x, b.y])
            hit = scenario.maps[a.floor].trace(p0, p1, walls_only=True)
            if hit is not None:
                ht, _, _ = hit
                raise InfeasiblePath(seg_idx, a.floor, p0 + ht * (p1 - p0))
            length = float(np.linalg.norm(p1 - p0))
            n_full = int(math.floor(length / scenario.stride + 1e-9))
            dists = [scenario.stride * k for k in range(1, n_full + 1)]
            if length - (dists[-1] if dists else 0.0) > 1e-9:
                dists.append(length)
            last = p0
            for d in dists:
                pos = p0 + (p1 - p0) * (d / length)
                dt = float(np.linalg.norm(pos - last)) / scenario.speed * 1000.0
                t += dt
                steps.append(TruthStep(int(round(t)), pos, b.floor, pos - last))
                knots.append((t, pos[0], pos[1], b.floor))
                last = pos
            seg_idx += 1
        if b.dwell_s > 0:
            t += b.dwell_s * 1000.0
            knots.append((t, b.x, b.y, b.floor))
    if scenario.max_steps is not None and len(steps) > scenario.max_steps:
        steps = steps[: scenario.max_steps]
        t_end = steps[-1].t_ms
        knots = [k for k in knots if k[0] <= t_end + 1e-6]
    end = max(knots[-1][0], steps[-1].t_ms if steps else 0.0)
    kt = np.array([k[0] for k in knots])
    kxy = np.array([[k[1], k[2]] for k in knots])
    kf = np.array([k[3] for k in knots], dtype=int)
    return Truth(kt, kxy, kf, steps, np.array([w0.x, w0.y]), int(math.ceil(end)))


def rssi_at_distance(d, model: PathLossModel, rng: Optional[np.random.Generator] = None,
                     attenuation: float = 0.0) -> np.ndarray:
    d = np.asarray(d, dtype=float)
    r = model.R0 - 10.0 * model.n * np.log10(d) - attenuation
    if rng is not None and model.sigma > 0:
        r = r + rng.normal(0.0, model.sigma, d.shape)
    return r


def synthesize_rssi(truth: Truth, registry: BeaconRegistry, model: PathLossModel, seed: int = 0,
                    radio: RadioSim = RadioSim()) -> list[dict]:
    """One reading per beacon every broadcast interval, random phase per beacon."""
    rng = _rng(seed, 1)
    out = []
    for b in sorted(registry, key=lambda b: b.uuid):
        phase = int(rng.integers(0, radio.interval_ms))
        times = np.arange(phase, truth.end_ms + 1, radio.interval_ms)
        if len(times) == 0:
            continue
        pos, floors = truth.at(times)
        dfloor = b.floor_id - floors
        dz = dfloor * radio.floor_height + (radio.beacon_height - radio.device_height)
        horiz = np.hypot(pos[:, 0] - b.position[0], pos[:, 1] - b.position[1])
        d = np.sqrt(horiz ** 2 + dz ** 2)
        rssi = rssi_at_distance(np.maximum(d, 1e-3), model, rng, radio.floor_attenuation * np.abs(dfloor))
        for t, r in zip(times.tolist(), rssi.tolist()):
            if r >= radio.rx_floor:
                out.append({"type": "rssi", "t_ms": int(t), "uuid": b.uuid, "rssi_dbm": round(r, 3)})
    return out


def synthesize_steps(truth: Truth, noise: StepNoise = StepNoise(), seed: int = 0) -> list[dict]:
    """Direct step records with heading noise, bias and accumulating drift."""
    rng = _rng(seed, 2)
    out = []
    for k, s in enumerate(truth.steps):
        length = float(np.linalg.norm(s.vector))
        yaw = math.atan2(s.vector[1], s.vector[0])
        yaw += noise.heading_bias + noise.heading_drift * (k + 1)
        if noise.heading_std > 0:
            yaw += rng.normal(0.0, noise.heading_std)
        if noise.length_std > 0:
            length = max(length + rng.normal(0.0, noise.length_std), 0.0)
        yaw = math.atan2(math.sin(yaw), math.cos(yaw))
        out.append({"type": "step", "t_ms": int(s.t_ms), "step_len": length, "yaw": yaw})
    return out


def synthesize_imu(truth: Truth, noise: StepNoise = StepNoise(), seed: int = 0, rate_hz: float = 60.0,
                   amplitude: float = 2.0, stride_period_ms: float = 600.0,
                   accel_noise: float = 0.05) -> list[dict]:
    """60 Hz IMU records whose vertical acceleration peaks at every step.

    Around each step time a cosine pulse of one stride period is emitted;
    the device lies flat with its +y axis along the (noisy) step heading.
    """
    rng = _rng(seed, 3)
    dt = 1000.0 / rate_hz
    times = np.arange(0.0, truth.end_ms + dt, dt)
    z = np.zeros(len(times))
    heading = np.zeros(len(times))
    step_t = np.array([s.t_ms for s in truth.steps], dtype=float)
    yaws = []
    for k, s in enumerate(truth.steps):
        yaw = math.atan2(s.vector[1], s.vector[0]) + noise.heading_bias + noise.heading_drift * (k + 1)
        if noise.heading_std > 0:
            yaw += rng.normal(0.0, noise.heading_std)
        yaws.append(yaw)
    half = stride_period_ms / 2.0
    for k, tk in enumerate(step_t):
        m = (times >= tk - half) & (times < tk + half)
        z[m] = amplitude * np.cos(2 * math.pi * (times[m] - tk) / stride_period_ms)
    if len(step_t):
        idx = np.clip(np.searchsorted(step_t, times - half, side="left"), 0, len(step_t) - 1)
        heading = np.asarray(yaws)[idx]
    z += rng.normal(0.0, accel_noise, len(times)) if accel_noise > 0 else 0.0
    out = []
    for t, zz, th in zip(times, z, heading):
        a = 0.5 * (th - math.pi / 2)
        out.append({
            "type": "imu",
            "t_ms": int(round(t)),
            "acc": [0.0, 0.0, float(zz)],
            "acc_g": [0.0, 0.0, float(zz) + 9.80665],
            "quat": [0.0, 0.0, math.sin(a), math.cos(a)],
        })
    return out


def merge_events(*streams: Sequence[dict]) -> list[dict]:
    """Timestamp-ordered merge; RSSI precedes IMU/step records at equal times."""
    events = [e for s in streams for e in s]
    return sorted(events, key=lambda e: (e["t_ms"], EVENT_ORDER.get(e["type"], 2)))


def simulate(scenario: Scenario) -> tuple[list[dict], Truth]:
    truth = generate_truth(scenario)
    rssi = synthesize_rssi(truth, scenario.registry, scenario.path_loss, scenario.seed, scenario.radio)
    if scenario.imu_mode:
        motion = synthesize_imu(truth, scenario.noise, scenario.seed, scenario.imu_rate_hz,
                                scenario.imu_amplitude, scenario.stride / scenario.speed * 1000.0)
    else:
        motion = synthesize_steps(truth, scenario.noise, scenario.seed)
    return merge_events(rssi, motion), truth


# --------------------------------------------------------------------------
# metrics


def nearest_rank(sorted_values: np.ndarray, q: float) -> float:
    """Nearest-rank quantile: the ceil(q n)-th smallest value."""
    n = len(sorted_values)
    if n == 0:
        return float("nan")
    k = max(int(math.ceil(q * n - 1e-12)), 1)
    return float(sorted_values[k - 1])


@dataclass
class MetricsReport:
    mpe: float
    p50: float
    p80: float
    std: float
    errors: np.ndarray = field(repr=False)
    wall_crossing_count: int = 0

    def as_dict(self, per_step: bool = False) -> dict:
        d = {
            "mpe": self.mpe, "p50": self.p50, "p80": self.p80, "std": self.std,
            "n": int(len(self.errors)), "wall_crossing_count": int(self.wall_crossing_count),
        }
        if per_step:
            d["errors"] = [float(e) for e in self.errors]
        return d

    def cdf(self) -> list[tuple[float, float]]:
        e = np.sort(self.errors)
        n = len(e)
        return [(float(v), (i + 1) / n) for i, v in enumerate(e)]


def wall_crossings(positions, floors, maps: Mapping[int, FloorPlanMap], exclude=None) -> int:
    """Inter-step segments that cross a wall on their floor."""
    positions = np.asarray(positions, dtype=float)
    count = 0
    for i in range(1, len(positions)):
        if exclude is not None and exclude[i]:
            continue
        if floors[i] != floors[i - 1] or floors[i] not in maps:
            continue
        a, b = positions[i - 1], positions[i]
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            continue
        if maps[floors[i]].trace(a, b, walls_only=True) is not None:
            count += 1
    return count


def evaluate(outputs, truth_positions, floors=None, maps: Optional[Mapping[int, FloorPlanMap]] = None,
             exclude=None) -> MetricsReport:
    """Per-step errors and summary statistics; outputs align with truth by index."""
    out = np.asarray(outputs, dtype=float).reshape(-1, 2)
    tru = np.asarray(truth_positions, dtype=float).reshape(-1, 2)
    if len(out) != len(tru):
        raise LengthMismatch(f"{len(out)} outputs vs {len(tru)} truth steps")
    err = np.linalg.norm(out - tru, axis=1)
    srt = np.sort(err)
    crossings = 0
    if maps is not None:
        fl = np.zeros(len(out), dtype=int) if floors is None else np.asarray(floors, dtype=int)
        crossings = wall_crossings(out, fl, maps, exclude)
    return MetricsReport(
        float(err.mean()) if len(err) else float("nan"),
        nearest_rank(srt, 0.5),
        nearest_rank(srt, 0.8),
        float(err.std()) if len(err) else float("nan"),
        err,
        crossings,
    )


def count_room_switches(positions, fmap: FloorPlanMap) -> int:
    """Changes of room id along a trajectory (points inside obstacles ignored)."""
    last = None
    n = 0
    for p in np.asarray(positions, dtype=float):
        if not np.all(np.isfinite(p)):
            continue
        room = fmap.room_of(p)
        if room is None:
            continue
        if last is not None and room != last:
            n += 1
        last = room
    return n
