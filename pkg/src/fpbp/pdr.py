"""Pedestrian dead reckoning: step detection, step length and heading.

Quaternions in the public API use the (x, y, z, w) component order reported
by Android rotation-vector sensors; the Madgwick filter keeps (w, x, y, z)
internally.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import VerticalDegenerate, ZeroQuaternion
from .geometry import wrap_angle

GRAVITY = 9.80665


def quat_to_rotmat(q) -> np.ndarray:
    """Rotation matrix (DCS -> ECS) of a unit quaternion given as (x, y, z, w)."""
    q = np.asarray(q, dtype=float)
    n = float(np.linalg.norm(q))
    if n < 1e-12:
        raise ZeroQuaternion("quaternion has zero norm")
    x, y, z, w = q / n
    return np.array(
        [
            [1 - 2 * y * y - 2 * z * z, 2 * x * y - 2 * z * w, 2 * x * z + 2 * y * w],
            [2 * x * y + 2 * z * w, 1 - 2 * x * x - 2 * z * z, 2 * y * z - 2 * x * w],
            [2 * x * z - 2 * y * w, 2 * y * z + 2 * x * w, 1 - 2 * x * x - 2 * y * y],
        ]
    )


def yaw_matrix(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def yaw_quat(angle: float) -> np.ndarray:
    """(x, y, z, w) quaternion of a rotation about +z."""
    return np.array([0.0, 0.0, math.sin(angle / 2), math.cos(angle / 2)])


def vertical_accel(accel_dcs, rotation: np.ndarray) -> float:
    """Vertical (z) component of a device-frame acceleration in the map frame."""
    return float(rotation[2] @ np.asarray(accel_dcs, dtype=float))


def heading_from_rotation(rotation: np.ndarray) -> float:
    """Yaw of the device's forward (+y) axis projected onto the map plane."""
    d = rotation[:, 1]
    norm = math.hypot(d[0], d[1])
    if norm < 1e-6:
        raise VerticalDegenerate("device y axis is vertical; heading undefined")
    return wrap_angle(math.atan2(d[1] / norm, d[0] / norm))


def step_length(z_pp: float, beta: float = 0.45) -> float:
    """Weinberg estimate s = beta * z_pp^(1/4)."""
    if z_pp < 0:
        raise ValueError("peak-to-peak acceleration must be non-negative")
    return beta * z_pp ** 0.25


def calibrate_beta(z_pps, stride: float) -> float:
    """Weinberg constant that makes the mean estimated step equal ``stride``."""
    roots = np.asarray(z_pps, dtype=float) ** 0.25
    return float(stride / roots.mean())


# --------------------------------------------------------------------------
# step detection


@dataclass(frozen=True)
class StepDetection:
    index: int  # sample index of the peak (k - h)
    z_pp: float


class StepDetector:
    """Peak detector over a sliding window of 2h+1 vertical accelerations.

    A step fires at ``k - h`` when that sample is the window maximum, exceeds
    ``z_th`` and lies more than ``k_th`` samples after the previous step.
    """

    def __init__(self, h: int = 15, z_th: float = 1.0, k_th: int = 18):
        if h < 1 or k_th < 0:
            raise ValueError("h must be >= 1 and k_th >= 0")
        self.h, self.z_th, self.k_th = h, z_th, k_th
        self.window: deque = deque(maxlen=2 * h + 1)
        self.k = -1
        self.last_step = -math.inf

    def push(self, z: float) -> Optional[StepDetection]:
        self.k += 1
        self.window.append(float(z))
        if len(self.window) < 2 * self.h + 1:
            return None
        center = self.window[self.h]
        peak = self.k - self.h
        if center < max(self.window) or center <= self.z_th or peak - self.last_step <= self.k_th:
            return None
        self.last_step = peak
        return StepDetection(peak, center - min(self.window))


def detect_steps(z, h: int = 15, z_th: float = 1.0, k_th: int = 18) -> list[StepDetection]:
    det = StepDetector(h, z_th, k_th)
    out = []
    for v in z:
        s = det.push(v)
        if s is not None:
            out.append(s)
    return out


# --------------------------------------------------------------------------
# orientation


def _qmul(a, b) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def _xyzw_to_wxyz(q):
    return np.array([q[3], q[0], q[1], q[2]], dtype=float)


def _wxyz_to_xyzw(q):
    return np.array([q[1], q[2], q[3], q[0]], dtype=float)


# the filter's earth frame is north-west-up; rotate by +90 deg about z for ENU
_NWU_TO_ENU = np.array([math.cos(math.pi / 4), 0.0, 0.0, math.sin(math.pi / 4)])
_ENU_TO_NWU = np.array([math.cos(math.pi / 4), 0.0, 0.0, -math.sin(math.pi / 4)])


class MadgwickAHRS:
    """Gradient-descent orientation filter (Madgwick, 2011), MARG and IMU forms.

    ``q`` is (w, x, y, z) and maps sensor-frame vectors to the NWU earth frame.
    """

    def __init__(self, gain: float = 0.1, q=(1.0, 0.0, 0.0, 0.0)):
        self.gain = gain
        self.q = np.asarray(q, dtype=float) / np.linalg.norm(q)

    def update(self, gyro, accel=None, mag=None, dt: float = 1 / 60) -> np.ndarray:
        if dt <= 0:
            raise ValueError("dt must be positive")
        q0, q1, q2, q3 = self.q
        qdot = 0.5 * _qmul(self.q, (0.0, *np.asarray(gyro, dtype=float)))
        a = None if accel is None else np.asarray(accel, dtype=float)
        if a is not None and np.linalg.norm(a) > 0:
            a = a / np.linalg.norm(a)
            f = [
                2 * (q1 * q3 - q0 * q2) - a[0],
                2 * (q0 * q1 + q2 * q3) - a[1],
                2 * (0.5 - q1 * q1 - q2 * q2) - a[2],
            ]
            J = [
                [-2 * q2, 2 * q3, -2 * q0, 2 * q1],
                [2 * q1, 2 * q0, 2 * q3, 2 * q2],
                [0.0, -4 * q1, -4 * q2, 0.0],
            ]
            m = None if mag is None else np.asarray(mag, dtype=float)
            if m is not None and np.linalg.norm(m) > 0:
                m = m / np.linalg.norm(m)
                h = _qmul(_qmul(self.q, (0.0, *m)), self.q * np.array([1, -1, -1, -1]))
                bx, bz = math.hypot(h[1], h[2]), h[3]
                f += [
                    2 * bx * (0.5 - q2 * q2 - q3 * q3) + 2 * bz * (q1 * q3 - q0 * q2) - m[0],
                    2 * bx * (q1 * q2 - q0 * q3) + 2 * bz * (q0 * q1 + q2 * q3) - m[1],
                    2 * bx * (q0 * q2 + q1 * q3) + 2 * bz * (0.5 - q1 * q1 - q2 * q2) - m[2],
                ]
                J += [
                    [-2 * bz * q2, 2 * bz * q3, -4 * bx * q2 - 2 * bz * q0, -4 * bx * q3 + 2 * bz * q1],
                    [-2 * bx * q3 + 2 * bz * q1, 2 * bx * q2 + 2 * bz * q0, 2 * bx * q1 + 2 * bz * q3, -2 * bx * q0 + 2 * bz * q2],
                    [2 * bx * q2, 2 * bx * q3 - 4 * bz * q1, 2 * bx * q0 - 4 * bz * q2, 2 * bx * q1],
                ]
            grad = np.asarray(J).T @ np.asarray(f)
            gn = np.linalg.norm(grad)
            if gn > 0:
                qdot = qdot - self.gain * grad / gn
        q = self.q + qdot * dt
        self.q = q / np.linalg.norm(q)
        return self.q


@dataclass
class ImuSample:
    t_ms: int
    acc: Optional[np.ndarray] = None  # linear acceleration, DCS
    acc_g: Optional[np.ndarray] = None  # acceleration including gravity, DCS
    gyro: Optional[np.ndarray] = None
    mag: Optional[np.ndarray] = None
    quat: Optional[np.ndarray] = None  # device-reported (x, y, z, w), DCS -> ECS


class OrientationTracker:
    """Device attitude in the map frame.

    For the first ``k0`` samples the device-reported quaternion is used as
    is; afterwards a Madgwick filter seeded with the attitude at ``k0`` takes
    over, provided gyroscope samples are available.
    """

    def __init__(self, map_yaw: float = 0.0, k0: int = 120, gain: float = 0.1):
        self.R_E = yaw_matrix(map_yaw)
        self.k0 = k0
        self.k = -1
        self.filter = MadgwickAHRS(gain)
        self.q_device: Optional[np.ndarray] = None
        self._last_t: Optional[int] = None
        self.q_ecs = np.array([0.0, 0.0, 0.0, 1.0])

    def update(self, sample: ImuSample) -> np.ndarray:
        self.k += 1
        dt = None if self._last_t is None else (sample.t_ms - self._last_t) / 1000.0
        self._last_t = sample.t_ms
        if sample.quat is not None:
            self.q_device = np.asarray(sample.quat, dtype=float)
        if self.k <= self.k0 or sample.gyro is None or not dt:
            if self.q_device is not None:
                self.q_ecs = self.q_device / np.linalg.norm(self.q_device)
                self.filter.q = _qmul(_ENU_TO_NWU, _xyzw_to_wxyz(self.q_ecs))
            return self.rotation
        q_nwu = self.filter.update(sample.gyro, sample.acc_g, sample.mag, dt)
        self.q_ecs = _wxyz_to_xyzw(_qmul(_NWU_TO_ENU, q_nwu))
        return self.rotation

    @property
    def rotation(self) -> np.ndarray:
        """R_D = R_E . R_D^E."""
        return self.R_E @ quat_to_rotmat(self.q_ecs)

    @property
    def heading(self) -> float:
        return heading_from_rotation(self.rotation)


@dataclass(frozen=True)
class StepEvent:
    t_ms: int
    length_s: float
    yaw_theta: float

    @property
    def vector(self) -> np.ndarray:
        return self.length_s * np.array([math.cos(self.yaw_theta), math.sin(self.yaw_theta)])


class PdrProcessor:
    """Turns a stream of IMU samples into ``StepEvent``s."""

    def __init__(self, h: int = 15, z_th: float = 1.0, k_th: int = 18, beta: float = 0.45,
                 map_yaw: float = 0.0, k0: int = 120, gain: float = 0.1):
        self.detector = StepDetector(h, z_th, k_th)
        self.orientation = OrientationTracker(map_yaw, k0, gain)
        self.beta = beta
        self._recent: deque = deque(maxlen=2 * h + 1)  # (t_ms, heading)

    def push(self, sample: ImuSample) -> Optional[StepEvent]:
        R = self.orientation.update(sample)
        try:
            yaw = heading_from_rotation(R)
        except VerticalDegenerate:
            yaw = self._recent[-1][1] if self._recent else 0.0
        self._recent.append((sample.t_ms, yaw))
        acc = sample.acc if sample.acc is not None else np.zeros(3)
        det = self.detector.push(vertical_accel(acc, R))
        if det is None:
            return None
        t_ms, yaw = self._recent[self.detector.h]  # the peak sits h samples back
        return StepEvent(t_ms, step_length(det.z_pp, self.beta), yaw)
