"""Log-odds voxel grid: updates, clamping, ray carving, serialization."""

import numpy as np
import pytest

from submaploc.errors import FormatError
from submaploc.occupancy import (OccupancyParams, VoxelGrid,
                                 pack_voxel_indices, unpack_voxel_indices)


def _center(ix, iy, iz, voxel=0.2):
    return np.array([[(ix + 0.5) * voxel, (iy + 0.5) * voxel, (iz + 0.5) * voxel]])


def test_two_hits_accumulate_log_odds():
    """Two endpoint observations of one voxel sum to 2 * 0.85 = 1.70."""
    grid = VoxelGrid()
    point = _center(0, 0, 0)
    origin = point[0]  # same voxel, so the ray deposits no misses
    grid.integrate(point, origin)
    grid.integrate(point, origin)
    assert abs(grid.log_odds(point)[0] - 1.70) < 1e-12
    expected = 1.0 / (1.0 + np.exp(-1.70))
    assert abs(grid.probability(point[0]) - expected) < 1e-12
    assert abs(expected - 0.8455) < 5e-5


def test_hit_then_four_pass_throughs():
    """One hit and four crossing rays net 0.85 - 4 * 0.4 = -0.75."""
    grid = VoxelGrid()
    target = _center(5, 0, 0)
    grid.integrate(target, target[0])
    behind = _center(0, 0, 0)[0]
    beyond = _center(9, 0, 0)
    for _ in range(4):
        grid.integrate(beyond, behind)
    assert abs(grid.log_odds(target)[0] - (-0.75)) < 1e-12
    assert not grid.is_occupied(target)[0]


def test_log_odds_clamped_at_band_edges():
    grid = VoxelGrid()
    point = _center(0, 0, 0)
    for _ in range(10):
        grid.integrate(point, point[0])
    assert grid.log_odds(point)[0] == 3.5
    assert abs(grid.probability(point[0]) - 1.0 / (1.0 + np.exp(-3.5))) < 1e-12
    assert abs(grid.probability(point[0]) - 0.9706) < 1e-4

    # rays through a neighbour drive it to the floor
    victim = _center(3, 0, 0)
    beyond = _center(7, 0, 0)
    for _ in range(10):
        grid.integrate(beyond, point[0])
    assert grid.log_odds(victim)[0] == -2.0


def test_single_hit_is_occupied():
    """0.85 log-odds is probability ~0.70, above the 0.6 threshold."""
    grid = VoxelGrid()
    point = _center(2, -1, 4)
    grid.integrate(point, point[0])
    assert grid.is_occupied(point)[0]
    assert grid.probability(point[0]) > 0.6


def test_extract_occupied_returns_voxel_center():
    grid = VoxelGrid()
    grid.integrate(np.array([[0.05, 0.19, 0.01]]), np.array([0.1, 0.1, 0.1]))
    occupied = grid.extract_occupied()
    np.testing.assert_allclose(occupied, [[0.1, 0.1, 0.1]], atol=1e-12)


def test_net_negative_voxel_is_not_extracted():
    """Crossing misses can retract an earlier hit below the threshold."""
    grid = VoxelGrid()
    target = _center(5, 0, 0)
    grid.integrate(target, target[0])
    assert len(grid.extract_occupied()) == 1
    behind = _center(0, 0, 0)[0]
    beyond = _center(9, 0, 0)
    for _ in range(3):
        grid.integrate(beyond, behind)
    centers = grid.extract_occupied()
    # only the pass-through endpoint voxel remains occupied
    np.testing.assert_allclose(centers, _center(9, 0, 0), atol=1e-12)


def test_empty_grid_and_empty_input():
    grid = VoxelGrid()
    assert len(grid.extract_occupied()) == 0
    grid.integrate(np.empty((0, 3)), np.zeros(3))
    assert len(grid) == 0
    assert grid.probability(np.array([1.0, 1.0, 1.0])) == 0.5


def test_beyond_max_ray_range_is_skipped():
    grid = VoxelGrid()
    far = np.array([[61.0, 0.1, 0.1]])
    grid.integrate(far, np.array([0.1, 0.1, 0.1]))
    assert len(grid) == 0


def test_axis_aligned_ray_carves_every_crossed_voxel():
    """A straight +x ray leaves misses on cells 0..4 and a hit on cell 5."""
    grid = VoxelGrid()
    grid.integrate(_center(5, 0, 0), _center(0, 0, 0)[0])
    for ix in range(5):
        assert abs(grid.log_odds(_center(ix, 0, 0))[0] - (-0.4)) < 1e-12
    assert abs(grid.log_odds(_center(5, 0, 0))[0] - 0.85) < 1e-12


def test_endpoint_voxel_never_receives_its_own_miss():
    grid = VoxelGrid()
    grid.integrate(_center(7, 3, -2), _center(0, 0, 0)[0])
    assert abs(grid.log_odds(_center(7, 3, -2))[0] - 0.85) < 1e-12


class TestBatchUpdateSemantics:
    """Per-call updates are order-independent; clamping happens per call."""

    def test_point_order_inside_one_call(self):
        rng = np.random.default_rng(0)
        pts = rng.uniform(-3, 3, (200, 3))
        origin = np.array([0.1, 0.1, 0.1])
        a = VoxelGrid().integrate(pts, origin)
        b = VoxelGrid().integrate(pts[::-1], origin)
        assert a.to_bytes() == b.to_bytes()

    def test_many_hits_in_one_call_clamp_once(self):
        grid = VoxelGrid()
        point = _center(0, 0, 0)
        grid.integrate(np.repeat(point, 10, axis=0), point[0])
        assert grid.log_odds(point)[0] == 3.5

    def test_integrate_returns_grid_for_chaining(self):
        grid = VoxelGrid()
        assert grid.integrate(_center(1, 1, 1), _center(1, 1, 1)[0]) is grid


def test_voxel_indices_use_floor():
    grid = VoxelGrid()
    idx = grid.voxel_indices(np.array([[-0.001, 0.0, 0.2], [0.199, -0.2, 0.3]]))
    np.testing.assert_array_equal(idx, [[-1, 0, 1], [0, -1, 1]])


def test_pack_unpack_roundtrip_with_negatives():
    rng = np.random.default_rng(1)
    idx = rng.integers(-(1 << 20), 1 << 20, (500, 3), dtype=np.int64)
    keys = pack_voxel_indices(idx)
    np.testing.assert_array_equal(unpack_voxel_indices(keys), idx)
    assert len(np.unique(keys)) == len(np.unique(idx, axis=0))


def test_pack_rejects_out_of_range():
    with pytest.raises(ValueError):
        pack_voxel_indices(np.array([[1 << 21, 0, 0]]))


class TestSerialization:
    def test_bytes_roundtrip_preserves_grid(self):
        rng = np.random.default_rng(2)
        grid = VoxelGrid()
        for _ in range(4):
            grid.integrate(rng.uniform(-4, 4, (100, 3)), rng.uniform(-1, 1, 3))
        blob = grid.to_bytes()
        back = VoxelGrid.from_bytes(blob)
        # log-odds travel as f32, so a second trip is byte-stable
        assert back.to_bytes() == VoxelGrid.from_bytes(back.to_bytes()).to_bytes()
        assert len(back) == len(grid)
        pts = rng.uniform(-4, 4, (50, 3))
        np.testing.assert_allclose(back.log_odds(pts), grid.log_odds(pts),
                                   atol=1e-6)

    def test_save_load(self, tmp_path):
        grid = VoxelGrid()
        grid.integrate(_center(1, 2, 3), _center(1, 2, 3)[0])
        path = tmp_path / "grid.occg"
        grid.save(path)
        back = VoxelGrid.load(path)
        assert back.to_bytes() == grid.to_bytes()

    def test_bad_magic_rejected(self):
        with pytest.raises(FormatError):
            VoxelGrid.from_bytes(b"NOPE" + bytes(8))

    def test_occupied_set_survives_roundtrip(self):
        grid = VoxelGrid()
        grid.integrate(_center(0, 0, 0), _center(0, 0, 0)[0])
        grid.integrate(_center(4, 4, 4), _center(4, 4, 4)[0])
        back = VoxelGrid.from_bytes(grid.to_bytes())
        np.testing.assert_allclose(back.extract_occupied(),
                                   grid.extract_occupied(), atol=1e-12)
