from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fpbp import buildings
from fpbp.errors import ConfigError, DegenerateMap, OutOfBounds, UnknownColor, ZeroGradient
from fpbp.floorplan import (
    DOOR, FTA, WALKABLE, WALL, ContourKind, MapFeature, StylizedRaster, compile_codes, compile_map,
    normalize_palette, parse_hex,
)


def box_codes(h=40, w=60):
    codes = np.zeros((h, w), dtype=np.uint8)
    codes[0, :] = codes[-1, :] = WALL
    codes[:, 0] = codes[:, -1] = WALL
    return codes


def test_parse_hex_and_palette_validation():
    assert parse_hex("#ff8000") == (255, 128, 0)
    with pytest.raises(ConfigError):
        parse_hex("#fff")
    with pytest.raises(ConfigError):
        normalize_palette({"Window": "#123456"})
    with pytest.raises(ConfigError):
        normalize_palette({"Wall": "#ffffff"})  # collides with Walkable


def test_classify_roundtrip_and_stray_pixel():
    codes = box_codes()
    codes[10:20, 30] = DOOR
    codes[5:8, 5:8] = FTA
    raster = StylizedRaster.from_codes(codes)
    assert np.array_equal(raster.classify(), codes)
    px = raster.pixels.copy()
    px[12, 7] = (10, 20, 30)
    with pytest.raises(UnknownColor) as exc:
        StylizedRaster(px).classify()
    assert (exc.value.col, exc.value.row) == (7, 12)
    assert "x=7, y=12" in str(exc.value)


def test_custom_palette():
    pal = {"Walkable": "#eeeeee", "Wall": "#111111", "Door": "#00ff00", "FTA": "#ff00ff"}
    codes = box_codes()
    codes[3, 3] = FTA
    raster = StylizedRaster.from_codes(codes, pal)
    assert tuple(raster.pixels[3, 3]) == (255, 0, 255)
    assert np.array_equal(raster.classify(), codes)


def test_png_roundtrip(tmp_path):
    codes = box_codes()
    codes[20, 10:30] = WALL
    StylizedRaster.from_codes(codes).to_png(tmp_path / "m.png")
    fmap = compile_map(StylizedRaster.from_png(tmp_path / "m.png"), 10.0, 0.3)
    assert np.array_equal(fmap.codes, codes)


def test_degenerate_and_invalid_inputs():
    with pytest.raises(DegenerateMap):
        compile_codes(np.full((10, 10), WALL, dtype=np.uint8), 10.0, 0.3)
    with pytest.raises(ConfigError):
        compile_codes(box_codes(), 10.0, 0.05)  # interval below one pixel
    with pytest.raises(ConfigError):
        compile_codes(np.zeros((1, 5), dtype=np.uint8), 10.0, 0.3)


def test_grid_formula_and_walkability():
    fmap = compile_codes(box_codes(40, 60), 10.0, 0.3)
    g = fmap.grid
    # g_ij = ((i + 0.5) I_M, (j + 0.5) I_M) for 1 <= i < floor(X / I_M)
    assert np.allclose(g.points, (g.index + 0.5) * 0.3)
    assert g.index[:, 0].min() >= 1 and g.index[:, 0].max() <= math.floor(6.0 / 0.3) - 1
    assert g.index[:, 1].max() <= math.floor(4.0 / 0.3) - 1
    assert all(fmap.is_walkable(p) for p in g.points)
    # every walkable candidate of the lattice is present
    expected = 0
    for i in range(1, math.floor(6.0 / 0.3)):
        for j in range(1, math.floor(4.0 / 0.3)):
            p = ((i + 0.5) * 0.3, (j + 0.5) * 0.3)
            expected += p[0] < 6.0 and p[1] < 4.0 and fmap.is_walkable(p)
    assert expected == len(g.points)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 5.99), st.floats(0, 3.99))
def test_ics_mcs_roundtrip(x, y):
    fmap = compile_codes(box_codes(), 10.0, 0.3)
    p = np.array([x, y])
    assert np.allclose(fmap.ics_to_mcs(fmap.mcs_to_ics(p)), p)
    col, row = fmap.pixel_of(p)
    assert np.all(np.abs(fmap.pixel_center(col, row) - p) <= 0.05 + 1e-12)


def test_feature_values_and_bounds():
    codes = box_codes()
    codes[10, 10], codes[10, 11], codes[10, 12] = DOOR, FTA, WALL
    fmap = compile_codes(codes, 10.0, 0.3)
    c = fmap.pixel_center
    assert fmap.feature_at(c(10, 10)) is MapFeature.DOOR and MapFeature.DOOR == 0.5
    assert fmap.feature_at(c(11, 10)) == 0.25
    assert fmap.feature_at(c(12, 10)) == 1.0
    assert fmap.feature_at(c(20, 20)) == 0.0
    assert fmap.features_at(np.array([[-1.0, 1.0]]))[0] == 1.0
    with pytest.raises(OutOfBounds):
        fmap.code_at((100.0, 1.0))
    assert np.array_equal(fmap.feature_field[10, 10:13], [0.5, 0.25, 1.0])


def test_rooms_match_connected_components(two_rooms):
    fmap = two_rooms.maps[0]
    assert fmap.n_rooms == 2
    rng = np.random.Generator(np.random.Philox(3))
    pts = buildings.walkable_points(fmap, 500, rng)
    for p in pts:
        col, row = fmap.pixel_of(p)
        assert fmap.room_of(p) == fmap.room_labels[row, col]
    # door joins the two rooms
    assert list(fmap.door_rooms.values()) == [(1, 2)]
    assert fmap.room_of(fmap.pixel_center(60, 30)) is None  # door pixel


def test_interior_obstacle_contour():
    codes = box_codes()
    codes[15:25, 20:30] = WALL  # pillar
    fmap = compile_codes(codes, 10.0, 0.3)
    kinds = [c.kind for c in fmap.contours]
    assert kinds.count(ContourKind.ROOM_BOUNDARY) == 1
    assert kinds.count(ContourKind.INTERIOR_OBSTACLE) == 1
    pillar = next(c for c in fmap.contours if c.kind == ContourKind.INTERIOR_OBSTACLE)
    assert sorted(map(tuple, pillar.vertices.astype(int).tolist())) == [(20, 15), (20, 25), (30, 15), (30, 25)]


def _dense_boundary(poly, spacing=0.002):
    out = []
    for a, b in zip(poly, np.roll(poly, -1, axis=0)):
        n = max(2, int(np.linalg.norm(b - a) / spacing) + 1)
        out.append(a + np.linspace(0, 1, n)[:, None] * (b - a))
    return np.concatenate(out)


def test_closest_contour_point_matches_brute_force(four_rooms):
    fmap = four_rooms.maps[0]
    dense = [_dense_boundary(c.vertices_mcs) for c in fmap.contours]
    rng = np.random.Generator(np.random.Philox(5))
    for p in rng.uniform([0, 0], [30, 16], (50, 2)):
        cid, d, q = fmap.nearest_contour(p)
        dists = [float(np.min(np.linalg.norm(s - p, axis=1))) for s in dense]
        assert d <= min(dists) + 1e-12
        assert d >= min(dists) - 0.002
        assert np.isclose(dists[cid], min(dists), atol=0.002)


def test_surface_normal_points_into_free_space():
    codes = box_codes(40, 60)
    codes[:, 30:32] = WALL  # vertical wall at x = 3.0..3.2 m
    fmap = compile_codes(codes, 10.0, 0.3)
    left = fmap.surface_normal_at((2.95, 2.0))
    right = fmap.surface_normal_at((3.25, 2.0))
    assert np.allclose(left, [-1, 0], atol=1e-9)
    assert np.allclose(right, [1, 0], atol=1e-9)
    with pytest.raises(ZeroGradient):
        fmap.surface_normal_at((1.5, 2.0))


def test_compiled_map_is_immutable(two_rooms):
    fmap = two_rooms.maps[0]
    with pytest.raises(ValueError):
        fmap.codes[0, 0] = WALKABLE
    with pytest.raises(ValueError):
        fmap.grid.points[0, 0] = 1.0
