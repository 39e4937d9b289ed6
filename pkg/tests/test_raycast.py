from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpbp import buildings
from fpbp.floorplan import DOOR, WALL, compile_codes
from fpbp.ppc import raycast, raycast_sampled


def _box():
    codes = np.zeros((40, 60), dtype=np.uint8)
    codes[0, :] = codes[-1, :] = codes[:, 0] = codes[:, -1] = WALL
    codes[:, 30] = WALL
    codes[15:25, 30] = DOOR
    return compile_codes(codes, 10.0, 0.3)


def test_hit_on_near_face():
    fmap = _box()
    res = raycast(fmap, (1.0, 1.0), (5.0, 1.0))
    assert res and res.code == WALL
    assert res.hit_point == pytest.approx([3.0, 1.0])
    assert res.pixel == (30, 30)


def test_door_blocks_unless_walls_only():
    fmap = _box()
    a, b = (1.0, 2.0), (5.0, 2.0)
    res = raycast(fmap, a, b)
    assert res and res.code == DOOR
    assert not raycast(fmap, a, b, walls_only=True)


def test_clear_segment_and_start_inside_obstacle():
    fmap = _box()
    assert not raycast(fmap, (0.5, 0.5), (2.5, 3.5))
    res = raycast(fmap, (3.05, 0.5), (3.05, 1.5))
    assert res and np.allclose(res.hit_point, (3.05, 0.5))


def _blocked_runs(fmap, x1, x2, t_end=1.0, n=20000):
    """Lengths of the blocked stretches of the segment before ``t_end``."""
    L = float(np.linalg.norm(x2 - x1)) * t_end
    ts = np.linspace(0.0, t_end, n)
    inside = fmap.features_at(x1 + ts[:, None] * (x2 - x1)) >= 0.5
    runs, cur = [], 0
    for b in inside:
        if b:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return [r * L / n for r in runs]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 30), st.lists(st.floats(0.05, 9.95), min_size=4, max_size=4))
def test_sampler_agrees_with_traversal_up_to_resolution(seed, xy):
    """The literal sampler only skips obstacles thinner than its spacing."""
    fmap = buildings.random_map(seed)
    x1, x2 = np.array(xy[:2]), np.array(xy[2:])
    L = float(np.linalg.norm(x2 - x1))
    delta = 0.5 / fmap.resolution_r
    spacing = L / max(round(L / delta), 1)
    exact = raycast(fmap, x1, x2)
    sampled = raycast_sampled(fmap, x1, x2, delta)
    if sampled:
        # a sampled hit is always a real hit, never before the exact one
        assert exact
        t_s = np.linalg.norm(sampled.hit_point - x1) / L if L else 0.0
        assert t_s >= np.linalg.norm(exact.hit_point - x1) / max(L, 1e-12) - 1e-9
        # whatever the sampler stepped over before its hit was thinner than one spacing
        before = _blocked_runs(fmap, x1, x2, max(t_s - spacing / max(L, 1e-12), 0.0))
        assert all(r < spacing + 1e-3 for r in before)
    elif exact:
        assert all(r < spacing + 1e-3 for r in _blocked_runs(fmap, x1, x2))


def test_walls_only_never_reports_more_hits():
    rng = np.random.Generator(np.random.Philox(7))
    fmap = buildings.random_map(3)
    for _ in range(500):
        a, b = rng.uniform(0.05, 9.95, (2, 2))
        if raycast(fmap, a, b, walls_only=True):
            assert raycast(fmap, a, b)
