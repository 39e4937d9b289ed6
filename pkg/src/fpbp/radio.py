"""BLE radio model, RSSI filtering and position estimators.

The main estimator is GML: a grid search minimizing a log-distance
likelihood misfit plus an RSSI-weighted distance penalty over walkable grid
points, gated by the convex hull of the selected beacons and by a Manhattan
radius around the previous fix. GIMLE, LLS trilateration and FRBW are
provided as baselines.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from . import geometry, kernels
from .errors import ConfigError, InsufficientBeacons, NoCandidates, SingularGeometry
from .floorplan import FloorPlanMap

LN10 = math.log(10.0)


@dataclass(frozen=True)
class PathLossModel:
    n: float = 2.2
    R0: float = -59.0
    sigma: float = 4.0

    def __post_init__(self):
        if not self.n > 0:
            raise ConfigError("path-loss factor n must be positive")
        if self.sigma < 0:
            raise ConfigError("sigma must be non-negative")

    def rssi(self, distance):
        """Noise-free RSSI at ``distance`` meters."""
        return -10.0 * self.n * np.log10(distance) + self.R0


def rssi_to_distance(filtered_rssi, model: PathLossModel):
    """Invert the log-distance model: d = 10^((R0 - R) / (10 n))."""
    return np.power(10.0, (model.R0 - np.asarray(filtered_rssi, dtype=float)) / (10.0 * model.n))


def expected_distance(true_d, sigma_hat, n):
    """Mean of the RSSI-derived distance under log-Gaussian noise."""
    return np.asarray(true_d, dtype=float) * np.exp(0.5 * (np.asarray(sigma_hat) * LN10 / (10.0 * n)) ** 2)


# --------------------------------------------------------------------------
# RSSI filtering


@dataclass
class RssiFilterState:
    """Scalar Kalman filter with a random-walk state model."""

    q_K: float = 0.16
    r_K: float = 16.0
    estimate: Optional[float] = None
    variance: float = 0.0

    def update(self, raw: float) -> float:
        if self.estimate is None:
            self.estimate = float(raw)
            self.variance = self.r_K
            return self.estimate
        p = self.variance + self.q_K
        gain = p / (p + self.r_K)
        self.estimate += gain * (float(raw) - self.estimate)
        self.variance = (1.0 - gain) * p
        return self.estimate


def kalman_filter_rssi(state: RssiFilterState, raw_rssi: float) -> float:
    return state.update(raw_rssi)


class RssiFilterBank:
    """Per-beacon Kalman filters plus last-heard timestamps."""

    def __init__(self, q_K: float = 0.16, r_K: float = 16.0):
        self.q_K, self.r_K = q_K, r_K
        self.states: dict[str, RssiFilterState] = {}
        self.last_heard: dict[str, int] = {}

    def update(self, uuid: str, rssi: float, t_ms: int) -> float:
        st = self.states.get(uuid)
        if st is None:
            st = self.states[uuid] = RssiFilterState(self.q_K, self.r_K)
        self.last_heard[uuid] = t_ms
        return st.update(rssi)

    def current(self, t_ms: int, max_age_ms: int) -> dict[str, float]:
        """Filtered RSSI of every beacon heard within ``max_age_ms``."""
        return {
            u: st.estimate
            for u, st in self.states.items()
            if t_ms - self.last_heard[u] <= max_age_ms
        }


# --------------------------------------------------------------------------
# beacons


@dataclass(frozen=True)
class Beacon:
    uuid: str
    position: tuple
    floor_id: int = 0


class BeaconRegistry:
    def __init__(self, beacons: Iterable[Beacon]):
        self.beacons = list(beacons)
        self._by_uuid = {b.uuid: b for b in self.beacons}
        if len(self._by_uuid) != len(self.beacons):
            raise ConfigError("duplicate beacon uuid in registry")

    def __len__(self):
        return len(self.beacons)

    def __iter__(self):
        return iter(self.beacons)

    def __contains__(self, uuid):
        return uuid in self._by_uuid

    def __getitem__(self, uuid) -> Beacon:
        return self._by_uuid[uuid]

    def on_floor(self, floor_id: int) -> "BeaconRegistry":
        return BeaconRegistry(b for b in self.beacons if b.floor_id == floor_id)

    def positions(self, uuids: Sequence[str]) -> np.ndarray:
        return np.array([self._by_uuid[u].position for u in uuids], dtype=float).reshape(-1, 2)

    def floors(self) -> list[int]:
        return sorted({b.floor_id for b in self.beacons})


def _known(readings: Mapping[str, float], registry: BeaconRegistry) -> dict[str, float]:
    return {u: float(r) for u, r in readings.items() if u in registry}


def select_top_beacons(readings: Mapping[str, float], N: int) -> list[str]:
    """The N strongest beacons by filtered RSSI; ties go to the smaller uuid."""
    if N < 3:
        raise ConfigError("at least 3 beacons must be selected")
    if len(readings) < N:
        raise InsufficientBeacons(f"{len(readings)} beacons heard, {N} required")
    ranked = sorted(readings.items(), key=lambda kv: (-kv[1], kv[0]))
    return [u for u, _ in ranked[:N]]


def softmax_weights(rssi, tau: float) -> np.ndarray:
    z = tau * np.asarray(rssi, dtype=float)
    z = np.exp(z - z.max())
    return z / z.sum()


# --------------------------------------------------------------------------
# GML


@dataclass(frozen=True)
class GmlConfig:
    N_select: int = 4
    kappa: float = 0.01
    tau: float = 0.5
    d0: float = 3.0
    smoothing_n: int = 4
    mode: str = "dense"  # or "sparse"
    min_distance: float = 1e-3  # clamp for log10 at beacon positions

    def __post_init__(self):
        if self.N_select < 3:
            raise ConfigError("N_select must be >= 3")
        if not (self.kappa >= 0 and self.tau > 0 and self.d0 > 0):
            raise ConfigError("kappa must be >= 0, tau and d0 positive")
        if self.smoothing_n < 1:
            raise ConfigError("smoothing_n must be >= 1")
        if self.mode not in ("dense", "sparse"):
            raise ConfigError(f"unknown GML mode {self.mode!r}")


@dataclass(frozen=True)
class BleFix:
    position: np.ndarray  # smoothed fix
    timestamp: int
    mode: str  # candidate set actually used: dense / sparse / ungated
    beacons: tuple
    raw: np.ndarray  # unsmoothed argmin, always a grid point
    floor_id: int = 0


def gate_mask(points: np.ndarray, prev, d0: float) -> np.ndarray:
    if prev is None:
        return np.ones(len(points), dtype=bool)
    return np.abs(points[:, 0] - prev[0]) + np.abs(points[:, 1] - prev[1]) < d0


def strictly_in_hull_and_gate(points, hull, prev, d0):
    m = gate_mask(points, prev, d0)
    if np.any(m):
        sub = geometry.strictly_inside_hull(hull, points[m])
        m[np.flatnonzero(m)[~sub]] = False
    return m


def candidate_indices(points: np.ndarray, hull: np.ndarray, prev, d0: float, mode: str):
    """Grid indices passing the gates, with the fallback ladder applied."""
    if mode == "dense":
        idx = np.flatnonzero(strictly_in_hull_and_gate(points, hull, prev, d0))
        if len(idx):
            return idx, "dense"
    idx = np.flatnonzero(gate_mask(points, prev, d0))
    if len(idx):
        return idx, "sparse"
    return np.arange(len(points)), "ungated"


def gml_objective(candidates, beacon_xy, dhat, rho, kappa, min_distance=1e-3) -> np.ndarray:
    return kernels.gml_objective(
        np.ascontiguousarray(candidates, dtype=float),
        np.ascontiguousarray(beacon_xy, dtype=float),
        np.ascontiguousarray(np.log10(dhat), dtype=float),
        np.ascontiguousarray(rho, dtype=float),
        float(kappa),
        float(min_distance),
    )


def gml_argmin(fmap: FloorPlanMap, registry: BeaconRegistry, readings: Mapping[str, float],
               prev, config: GmlConfig, model: PathLossModel):
    """Unsmoothed GML estimate: ``(grid point, mode used, selected uuids)``."""
    points = fmap.grid.points
    if len(points) == 0:
        raise NoCandidates("map has no grid points")
    heard = _known(readings, registry)
    uuids = select_top_beacons(heard, config.N_select)
    bxy = registry.positions(uuids)
    rssi = np.array([heard[u] for u in uuids])
    dhat = rssi_to_distance(rssi, model)
    rho = softmax_weights(rssi, config.tau)
    hull = geometry.convex_hull(bxy)
    idx, used = candidate_indices(points, hull, prev, config.d0, config.mode)
    scores = gml_objective(points[idx], bxy, dhat, rho, config.kappa, config.min_distance)
    best = idx[int(np.argmin(scores))]
    return points[best].copy(), used, tuple(uuids)


class FixSmoother:
    """Mean filter over the current estimate and the previous n-1 outputs.

    With ``recursive=True`` the previous *smoothed* outputs are averaged in;
    otherwise the previous raw estimates are.
    """

    def __init__(self, n: int = 4, recursive: bool = True):
        self.n = n
        self.recursive = recursive
        self.history: deque = deque(maxlen=max(n - 1, 0))

    def __call__(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        if self.n <= 1:
            return y.copy()
        out = (y + sum(self.history, np.zeros(2))) / (1 + len(self.history))
        self.history.append(out.copy() if self.recursive else y.copy())
        return out

    def reset(self):
        self.history.clear()


def gml_estimate(fmap: FloorPlanMap, registry: BeaconRegistry, readings: Mapping[str, float],
                 prev_fix, config: GmlConfig, history: Optional[FixSmoother] = None,
                 model: PathLossModel = PathLossModel(), t_ms: int = 0) -> BleFix:
    """One GML fix. ``history`` carries the smoothing state across calls."""
    prev = None if prev_fix is None else np.asarray(getattr(prev_fix, "position", prev_fix), dtype=float)
    y, used, uuids = gml_argmin(fmap, registry, readings, prev, config, model)
    if history is None:
        history = FixSmoother(config.smoothing_n)
    pos = history(y)
    return BleFix(pos, int(t_ms), used, uuids, y, fmap.floor_id)


# --------------------------------------------------------------------------
# baselines


def baseline_gimle(fmap: FloorPlanMap, registry: BeaconRegistry, readings: Mapping[str, float],
                   model: PathLossModel = PathLossModel(), N_select: int = 4) -> np.ndarray:
    """F_MLE alone, minimized over the full walkable grid with no gating."""
    points = fmap.grid.points
    if len(points) == 0:
        raise NoCandidates("map has no grid points")
    heard = _known(readings, registry)
    uuids = select_top_beacons(heard, N_select)
    dhat = rssi_to_distance([heard[u] for u in uuids], model)
    scores = gml_objective(points, registry.positions(uuids), dhat, np.zeros(len(uuids)), 0.0)
    return points[int(np.argmin(scores))].copy()


def baseline_trilateration_lls(registry: BeaconRegistry, readings: Mapping[str, float],
                               model: PathLossModel = PathLossModel()) -> np.ndarray:
    """Linear least squares over all heard beacons (last one as reference)."""
    heard = _known(readings, registry)
    if len(heard) < 3:
        raise InsufficientBeacons(f"{len(heard)} beacons heard, 3 required")
    uuids = sorted(heard)
    b = registry.positions(uuids)
    d = rssi_to_distance([heard[u] for u in uuids], model)
    A = 2.0 * (b[:-1] - b[-1])
    rhs = (d[-1] ** 2 - d[:-1] ** 2) + np.sum(b[:-1] ** 2, axis=1) - np.sum(b[-1] ** 2)
    sv = np.linalg.svd(A, compute_uv=False)
    if sv[-1] <= 1e-9 * max(sv[0], 1.0):
        raise SingularGeometry("beacon geometry is collinear")
    sol, *_ = np.linalg.lstsq(A, rhs, rcond=None)
    return sol


def baseline_frbw(registry: BeaconRegistry, readings: Mapping[str, float], g: float = 5.0,
                  model: PathLossModel = PathLossModel()) -> np.ndarray:
    """Weighted centroid of the 3 strongest beacons, weights (1/d)^g."""
    heard = _known(readings, registry)
    uuids = select_top_beacons(heard, 3)
    d = rssi_to_distance([heard[u] for u in uuids], model)
    # scale by the smallest distance first so large g cannot overflow
    w = (d.min() / d) ** g
    w /= w.sum()
    return w @ registry.positions(uuids)
