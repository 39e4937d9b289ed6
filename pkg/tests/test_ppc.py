from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpbp import buildings
from fpbp.errors import ConfigError
from fpbp.floorplan import DOOR, WALL, compile_codes
from fpbp.fusion import ParticleConfig, ParticleSet
from fpbp.ppc import (
    CASE_BLOCKED, CASE_DOOR, CASE_ROTATE, NO_HIT, PpcConfig, PpcState, candidate_angles, correct,
    find_optimal_rotation, incident_angle, plan_correction, raycast,
)


def room_pair():
    """12 x 6 m, wall at x = 6 (6.0..6.2) with a door for y in 2.4..3.6."""
    codes = np.zeros((60, 120), dtype=np.uint8)
    codes[0:2, :] = codes[-2:, :] = WALL
    codes[:, 0:2] = codes[:, -2:] = WALL
    codes[:, 60:62] = WALL
    codes[24:36, 60:62] = DOOR
    return compile_codes(codes, 10.0, 0.3)


def _correct(fmap, prev, est, fix=None, raw=None, state=None, cfg=PpcConfig()):
    state = state or PpcState()
    ps = ParticleSet.init(est, m=20, config=ParticleConfig(m=20))
    res = correct(fmap, np.asarray(prev, float), np.asarray(est, float), fix, ps, cfg, state, raw)
    return res, ps, state


def test_candidate_angle_order():
    d = math.radians(5)
    phi = candidate_angles(d, 3)
    assert phi == pytest.approx([d, -d, 2 * d, -2 * d, 3 * d, -3 * d])
    assert len(candidate_angles(d, 12)) == 24


def test_config_limits():
    with pytest.raises(ConfigError):
        PpcConfig(scale_f=0.5)
    with pytest.raises(ConfigError):
        PpcConfig(delta_phi=math.radians(10), N_angles=12)  # beyond +-(90 + delta) degrees
    with pytest.raises(ConfigError):
        PpcConfig(raycast_delta=0.2).delta_for(room_pair())


def test_free_step_passes_through():
    fmap = room_pair()
    res, ps, _ = _correct(fmap, (2.0, 2.0), (2.5, 2.2))
    assert res.case == NO_HIT
    assert res.position == pytest.approx([2.5, 2.2])
    assert ps.estimate() == pytest.approx([2.5, 2.2])


def test_case1_grazing_step_is_rotated():
    fmap = room_pair()
    prev, est = np.array([5.6, 1.0]), np.array([6.1, 1.3])  # clips the wall at a shallow angle
    res, ps, _ = _correct(fmap, prev, est)
    assert res.case == CASE_ROTATE
    step = est - prev
    assert np.linalg.norm(res.position - prev) == pytest.approx(np.linalg.norm(step))
    assert not raycast(fmap, prev, res.position)
    assert abs(res.phi_star) == pytest.approx(
        min(abs(p) for p in candidate_angles(math.radians(5), 12)
            if not raycast(fmap, prev, prev + 1.5 * np.array([[math.cos(p), -math.sin(p)], [math.sin(p), math.cos(p)]]) @ step)))
    # particles moved with the correction
    assert ps.estimate() == pytest.approx(res.position)


def test_case2_head_on_wall_backs_off():
    fmap = room_pair()
    prev, est = np.array([5.7, 5.0]), np.array([6.3, 5.0])  # straight into the wall near a corner
    res, _, state = _correct(fmap, prev, est, cfg=PpcConfig(N_angles=6))
    assert res.case == CASE_BLOCKED
    assert res.position == pytest.approx(res.hit - 0.1 * (est - prev))
    assert not raycast(fmap, prev, res.position)
    assert state.case2_streak == 1


def test_case3_door_passage_needs_ble_in_other_room():
    fmap = room_pair()
    prev, est = np.array([5.7, 3.0]), np.array([6.4, 3.0])
    # BLE still in the left room: blocked
    res, _, _ = _correct(fmap, prev, est, fix=np.array([4.0, 3.0]))
    assert res.case == CASE_BLOCKED and res.hit_code == DOOR
    # BLE already in the right room: through the door
    res, _, state = _correct(fmap, prev, est, fix=np.array([8.0, 3.0]))
    assert res.case == CASE_DOOR
    assert fmap.room_of(res.position) == fmap.room_of((8.0, 3.0))
    assert not raycast(fmap, prev, res.position, walls_only=True)
    assert state.current_room == fmap.room_of((8.0, 3.0))


def test_door_at_oblique_angle_uses_rotation_plan():
    fmap = room_pair()
    prev, est = np.array([5.7, 2.6]), np.array([6.3, 3.5])
    hit = raycast(fmap, prev, est)
    plan = plan_correction(fmap, prev, est - prev, hit, PpcConfig(alpha0=math.radians(20)))
    assert plan.needs_yaw
    alpha = incident_angle(plan.door_context["normal"], est - prev)
    assert alpha > math.radians(20)
    # the filtered sequence keeps one rotation direction only
    assert all(p > 0 for p in plan.filtered_Phi) or all(p < 0 for p in plan.filtered_Phi)


def test_case2_streak_resets_to_ble_fix():
    fmap = room_pair()
    state = PpcState()
    prev, est = np.array([5.7, 5.0]), np.array([6.3, 5.0])
    fix = np.array([3.0, 4.0])
    cfg = PpcConfig(N_angles=6, case2_streak_limit=3)
    results = [_correct(fmap, prev, est, fix=fix, state=state, cfg=cfg)[0] for _ in range(3)]
    assert [r.reset for r in results] == [False, False, True]
    assert results[-1].position == pytest.approx(fix)
    assert state.case2_streak == 0


def test_find_optimal_rotation_none_when_boxed_in():
    fmap = room_pair()
    prev = np.array([0.25, 0.25])
    assert find_optimal_rotation(fmap, prev, np.array([-1.0, -1.0]), candidate_angles(0.1, 3), 1.5) is None


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 40), st.integers(0, 10_000), st.floats(0.3, 1.2), st.floats(-math.pi, math.pi))
def test_feasibility_invariant_on_random_maps(map_seed, pt_seed, length, theta):
    """Every corrected step is wall-free, unless it is a flagged reset."""
    fmap = buildings.random_map(map_seed)
    rng = np.random.Generator(np.random.Philox(pt_seed))
    prev = buildings.walkable_points(fmap, 1, rng)[0]
    est = prev + length * np.array([math.cos(theta), math.sin(theta)])
    fix = buildings.walkable_points(fmap, 1, rng)[0]
    res, _, _ = _correct(fmap, prev, est, fix=fix)
    if not res.reset:
        assert not raycast(fmap, prev, res.position, walls_only=True)
        if res.case in (NO_HIT, CASE_ROTATE, CASE_BLOCKED):
            assert not raycast(fmap, prev, res.position)
