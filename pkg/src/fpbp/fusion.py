"""Particle filter fusing step events with BLE position fixes.

Random numbers come from numpy's counter-based Philox generator, so a given
seed yields the same particle stream on every platform.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import AllZeroWeights, ConfigError


@dataclass(frozen=True)
class ParticleConfig:
    m: int = 500
    nu_s: float = 0.05  # step-length noise bound, m
    nu_theta: float = math.radians(10.0)  # heading noise bound, rad
    sigma2: float = 0.1  # observation variance, m^2
    ess_fraction: Optional[float] = None  # resample only below ess_fraction * m
    stale_ms: int = 2000  # fixes older than this are not fused

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("particle count m must be >= 1")
        if self.nu_s < 0 or self.nu_theta < 0:
            raise ConfigError("noise bounds must be non-negative")
        if not self.sigma2 > 0:
            raise ConfigError("sigma2 must be positive")
        if self.ess_fraction is not None and not 0 < self.ess_fraction <= 1:
            raise ConfigError("ess_fraction must lie in (0, 1]")


def make_rng(seed) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(seed))


def systematic_indices(weights: np.ndarray, u: float) -> np.ndarray:
    """Indices drawn by systematic resampling with offset ``u`` in [0, 1)."""
    m = len(weights)
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    positions = (u + np.arange(m)) / m
    return np.minimum(np.searchsorted(cdf, positions, side="right"), m - 1)


class ParticleSet:
    """Weighted position hypotheses ``x_i, w_i``."""

    def __init__(self, positions: np.ndarray, weights: np.ndarray, config: ParticleConfig,
                 rng: np.random.Generator):
        self.positions = np.asarray(positions, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.config = config
        self.rng = rng

    @classmethod
    def init(cls, x0, m: Optional[int] = None, config: ParticleConfig = ParticleConfig(),
             seed=0) -> "ParticleSet":
        m = config.m if m is None else m
        if m < 1:
            raise ConfigError("particle count m must be >= 1")
        pos = np.tile(np.asarray(x0, dtype=float), (m, 1))
        return cls(pos, np.full(m, 1.0 / m), config, make_rng(seed))

    def __len__(self):
        return len(self.weights)

    def propagate(self, length_s: float, theta: float) -> "ParticleSet":
        """Move each particle by (s + nu_s) at heading (theta + nu_theta)."""
        m = len(self)
        ns = self.rng.uniform(-self.config.nu_s, self.config.nu_s, m)
        nt = self.rng.uniform(-self.config.nu_theta, self.config.nu_theta, m)
        s = length_s + ns
        a = theta + nt
        self.positions[:, 0] += s * np.cos(a)
        self.positions[:, 1] += s * np.sin(a)
        return self

    def reweight(self, x_b) -> "ParticleSet":
        d2 = np.sum((self.positions - np.asarray(x_b, dtype=float)) ** 2, axis=1)
        w = self.weights * np.exp(-d2 / (2.0 * self.config.sigma2))
        total = w.sum()
        if not total > 0 or not np.isfinite(total):
            raise AllZeroWeights("all particle weights underflowed")
        self.weights = w / total
        return self

    def effective_size(self) -> float:
        return float(1.0 / np.sum(self.weights ** 2))

    def resample(self, force: bool = False) -> "ParticleSet":
        """Systematic resampling; weights become uniform."""
        frac = self.config.ess_fraction
        if not force and frac is not None and self.effective_size() >= frac * len(self):
            return self
        idx = systematic_indices(self.weights, self.rng.random())
        self.positions = self.positions[idx]
        self.weights = np.full(len(self), 1.0 / len(self))
        return self

    def estimate(self) -> np.ndarray:
        return self.weights @ self.positions

    def translate(self, v) -> "ParticleSet":
        self.positions += np.asarray(v, dtype=float)
        return self

    def reset(self, x) -> "ParticleSet":
        """Collapse every particle onto ``x`` with uniform weights."""
        self.positions[:] = np.asarray(x, dtype=float)
        self.weights = np.full(len(self), 1.0 / len(self))
        return self

    def snapshot(self) -> dict:
        return {
            "positions": self.positions.tolist(),
            "weights": self.weights.tolist(),
        }
