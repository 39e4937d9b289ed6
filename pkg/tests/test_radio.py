from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpbp import radio
from fpbp.errors import ConfigError, InsufficientBeacons, SingularGeometry
from fpbp.radio import Beacon, BeaconRegistry, FixSmoother, GmlConfig, PathLossModel


def test_path_loss_roundtrip():
    m = PathLossModel(n=2.2, R0=-59.0)
    d = np.array([0.5, 1.0, 3.0, 12.0])
    assert np.allclose(radio.rssi_to_distance(m.rssi(d), m), d)
    assert m.rssi(1.0) == -59.0
    assert m.rssi(10.0) == pytest.approx(-81.0)


def test_expected_distance_closed_form():
    # E[d_hat] = d * exp((sigma ln10 / (10 n))^2 / 2)
    assert radio.expected_distance(5.0, 4.0, 2.0) == pytest.approx(5.0 * math.exp(0.5 * (4 * math.log(10) / 20) ** 2))
    assert radio.expected_distance(5.0, 0.0, 2.0) == 5.0


def _scalar_kalman_oracle(zs, q, r):
    x, p = zs[0], r
    out = [x]
    for z in zs[1:]:
        p_pred = p + q
        k = p_pred / (p_pred + r)
        x = x + k * (z - x)
        p = (1 - k) * p_pred
        out.append(x)
    return out


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-100, -30), min_size=1, max_size=60))
def test_kalman_matches_oracle(zs):
    st_ = radio.RssiFilterState(0.16, 16.0)
    got = [st_.update(z) for z in zs]
    assert np.allclose(got, _scalar_kalman_oracle(zs, 0.16, 16.0))


def test_kalman_converges_to_constant_and_gain_limit():
    st_ = radio.RssiFilterState(0.16, 16.0)
    for _ in range(500):
        st_.update(-70.0)
    assert st_.estimate == pytest.approx(-70.0)
    # steady-state variance solves P = (P + q) r / (P + q + r)
    q, r = 0.16, 16.0
    p_ss = (-q + math.sqrt(q * q + 4 * q * r)) / 2
    assert st_.variance == pytest.approx(p_ss, rel=1e-6)


def test_filter_bank_age_out():
    bank = radio.RssiFilterBank()
    bank.update("a", -60, 0)
    bank.update("b", -70, 900)
    assert set(bank.current(1000, 1000)) == {"a", "b"}
    assert set(bank.current(1500, 1000)) == {"b"}


def test_top_beacon_selection_ties_and_errors():
    r = {"c": -60.0, "a": -60.0, "b": -50.0, "d": -80.0}
    assert radio.select_top_beacons(r, 3) == ["b", "a", "c"]
    with pytest.raises(InsufficientBeacons):
        radio.select_top_beacons({"a": -1, "b": -2}, 3)
    with pytest.raises(ConfigError):
        radio.select_top_beacons(r, 2)


@given(st.lists(st.floats(-100, -30), min_size=1, max_size=10), st.floats(0.01, 2))
def test_softmax_weights(rssi, tau):
    w = radio.softmax_weights(rssi, tau)
    assert w.sum() == pytest.approx(1.0)
    assert np.all(w > 0)
    order = np.argsort(rssi, kind="stable")
    assert np.all(np.diff(w[order]) >= -1e-15)


def test_smoother_recursive_definition():
    s = FixSmoother(4)
    ys = [np.array([float(k), 0.0]) for k in (4, 8, 0, 4, 12)]
    out = [s(y)[0] for y in ys]
    # warm-up divides by the available count; later outputs average y with the last 3 outputs
    assert out[0] == 4
    assert out[1] == 6
    assert out[2] == pytest.approx((0 + 4 + 6) / 3)
    assert out[3] == pytest.approx((4 + out[0] + out[1] + out[2]) / 4)
    assert out[4] == pytest.approx((12 + out[1] + out[2] + out[3]) / 4)
    plain = FixSmoother(2, recursive=False)
    assert [plain(y)[0] for y in ys[:3]] == [4, 6, 4]
    assert np.array_equal(FixSmoother(1)(ys[0]), ys[0])


def test_gate_and_candidate_ladder():
    pts = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [5.0, 5.0]])
    hull = np.array([[0.5, 0.5], [3.0, 0.5], [3.0, 3.0], [0.5, 3.0]])
    idx, mode = radio.candidate_indices(pts, hull, (1.0, 1.0), 3.0, "dense")
    assert mode == "dense" and idx.tolist() == [1, 2]
    idx, mode = radio.candidate_indices(pts, hull, (0.0, 0.0), 0.5, "dense")
    assert mode == "sparse" and idx.tolist() == [0]
    idx, mode = radio.candidate_indices(pts, hull, (10.0, 10.0), 0.5, "dense")
    assert mode == "ungated" and len(idx) == 4
    # Manhattan, strict
    assert radio.gate_mask(pts, (0.0, 0.0), 2.0).tolist() == [True, False, False, False]


def _reg(points, floor=0):
    return BeaconRegistry([Beacon(f"b{i}", tuple(p), floor) for i, p in enumerate(points)])


def test_gml_raw_fix_is_walkable_grid_point(four_rooms):
    fmap, reg = four_rooms.maps[0], four_rooms.registry
    m = PathLossModel()
    rng = np.random.Generator(np.random.Philox(1))
    smoother = FixSmoother(4)
    prev = None
    pts = {tuple(p) for p in fmap.grid.points}
    for _ in range(40):
        u = rng.uniform([1, 1], [29, 15])
        readings = {b.uuid: float(m.rssi(max(np.linalg.norm(np.asarray(b.position) - u), 0.1)) + 4 * rng.standard_normal())
                    for b in reg}
        fix = radio.gml_estimate(fmap, reg, readings, prev, GmlConfig(), smoother, m)
        assert tuple(fix.raw) in pts
        assert fmap.is_walkable(fix.raw)
        assert fix.mode in ("dense", "sparse", "ungated")
        prev = fix


def test_penalty_pulls_toward_strong_beacons(four_rooms):
    fmap = four_rooms.maps[0]
    reg = _reg([(2, 2), (14, 2), (2, 6), (14, 6)])
    m = PathLossModel()
    # inconsistent ranges: the objective alone is flat-ish, the penalty breaks it toward b0
    readings = {"b0": -60.0, "b1": -75.0, "b2": -75.0, "b3": -75.0}
    base = radio.gml_argmin(fmap, reg, readings, None, GmlConfig(kappa=0.0, mode="sparse"), m)[0]
    pulled = radio.gml_argmin(fmap, reg, readings, None, GmlConfig(kappa=1.0, mode="sparse"), m)[0]
    assert np.linalg.norm(pulled - (2, 2)) <= np.linalg.norm(base - (2, 2))


def test_trilateration_exact_and_singular():
    m = PathLossModel()
    bpos = [(0, 0), (10, 0), (0, 10), (10, 10)]
    reg = _reg(bpos)
    u = np.array([3.0, 4.0])
    readings = {f"b{i}": float(m.rssi(np.linalg.norm(np.asarray(p) - u))) for i, p in enumerate(bpos)}
    assert radio.baseline_trilateration_lls(reg, readings, m) == pytest.approx(u)
    line = _reg([(0, 0), (5, 0), (10, 0)])
    with pytest.raises(SingularGeometry):
        radio.baseline_trilateration_lls(line, {"b0": -60, "b1": -60, "b2": -60}, m)


def test_frbw_weighted_centroid():
    m = PathLossModel()
    reg = _reg([(0, 0), (10, 0), (0, 10), (10, 10)])
    d = np.array([2.0, 4.0, 8.0, 20.0])
    readings = {f"b{i}": float(m.rssi(di)) for i, di in enumerate(d)}
    w = (1 / d[:3]) ** 5
    want = (w / w.sum()) @ np.array([(0, 0), (10, 0), (0, 10)], dtype=float)
    assert radio.baseline_frbw(reg, readings, 5.0, m) == pytest.approx(want)
    # huge g does not overflow
    assert np.all(np.isfinite(radio.baseline_frbw(reg, readings, 400.0, m)))


def test_gimle_ignores_gates(four_rooms):
    fmap, reg = four_rooms.maps[0], four_rooms.registry
    m = PathLossModel(sigma=0.0)
    u = fmap.grid.points[123]
    readings = {b.uuid: float(m.rssi(np.linalg.norm(np.asarray(b.position) - u))) for b in reg}
    assert np.array_equal(radio.baseline_gimle(fmap, reg, readings, m), u)


def test_registry_queries():
    reg = BeaconRegistry([Beacon("a", (0, 0), 0), Beacon("b", (1, 1), 1)])
    assert reg.floors() == [0, 1]
    assert [b.uuid for b in reg.on_floor(1)] == ["b"]
    assert "a" in reg and len(reg) == 2
    with pytest.raises(ConfigError):
        BeaconRegistry([Beacon("a", (0, 0)), Beacon("a", (1, 1))])
