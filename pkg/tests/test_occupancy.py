import io
import math

import numpy as np
import pytest

from uvexplore import voxw
from uvexplore.occupancy import (
    Box,
    OccupancyState,
    OutOfBoundsError,
    Scan,
    box_all,
    box_radius,
    coarse_factor,
    coarse_free_grid,
    coarse_free_voxels,
    coverage_stats,
    integrate_scan,
    load_map,
    mark_free_box,
    new_map,
    ray_cast,
    ray_cast_many,
    save_map,
    state,
    state_grid,
)

FREE, OCC, UNK = (
    OccupancyState.FREE,
    OccupancyState.OCCUPIED,
    OccupancyState.UNKNOWN,
)


def line_map(n=10, resolution=1.0):
    return new_map(Box.from_extent((n, 1, 1)), resolution)


def random_grid(rng, shape, p=(0.6, 0.2, 0.2)):
    return rng.choice(np.array([FREE, OCC, UNK], dtype=np.uint8), shape, p=p)


def test_new_map_shape():
    omap = new_map(Box.from_extent((9.6, 9.6, 3.0)), 0.3)
    assert omap.shape == (32, 32, 10)
    assert np.all(omap.states == UNK)

    omap = new_map(Box.from_extent((1, 1, 1)), 1.0)
    assert omap.shape == (1, 1, 1)
    assert state(omap, (0, 0, 0)) is UNK


@pytest.mark.parametrize("resolution", [0, -0.3])
def test_new_map_bad_resolution(resolution):
    with pytest.raises(ValueError):
        new_map(Box.from_extent((1, 1, 1)), resolution)


def test_new_map_too_small():
    with pytest.raises(ValueError):
        new_map(Box.from_extent((0.1, 1, 1)), 0.3)


def test_integrate_miss_ray():
    omap = line_map()
    changed = integrate_scan(omap, (0.5, 0.5, 0.5), [((4.5, 0.5, 0.5), False)])
    assert changed == {(i, 0, 0) for i in range(5)}
    assert all(state(omap, (i, 0, 0)) is FREE for i in range(5))
    assert all(state(omap, (i, 0, 0)) is UNK for i in range(5, 10))


def test_integrate_hit_ray():
    omap = line_map()
    changed = integrate_scan(omap, (0.5, 0.5, 0.5), [((4.5, 0.5, 0.5), True)])
    assert len(changed) == 5
    assert all(state(omap, (i, 0, 0)) is FREE for i in range(4))
    assert state(omap, (4, 0, 0)) is OCC


def test_integrate_log_odds_recurrence():
    omap = line_map()
    model = omap.model
    origin = (0.5, 0.5, 0.5)
    expected = 0.0
    updates = [True] * 6 + [False] * 12 + [True] * 2 + [False] * 3
    for hit in updates:
        if hit:
            integrate_scan(omap, origin, [((4.5, 0.5, 0.5), True)])
            expected += model.hit
        else:
            # passes through voxel 4 and ends beyond it
            integrate_scan(omap, origin, [((6.5, 0.5, 0.5), False)])
            expected += model.miss
        expected = min(max(expected, model.clamp_min), model.clamp_max)
        assert omap.log_odds[4, 0, 0] == pytest.approx(expected)
        assert state(omap, (4, 0, 0)) is (OCC if expected > 0 else FREE)


def test_integrate_updates_each_voxel_once():
    omap = line_map()
    origin = (0.5, 0.5, 0.5)
    scan = [((4.5, 0.5, 0.5), False)] * 3 + [((4.5, 0.6, 0.5), True)] * 2
    integrate_scan(omap, origin, scan)
    model = omap.model
    assert omap.log_odds[2, 0, 0] == pytest.approx(model.miss)
    assert omap.log_odds[4, 0, 0] == pytest.approx(model.miss + model.hit)


def test_integrate_is_order_independent(rng):
    origin = np.array([2.5, 2.5, 2.5])
    endpoints = rng.uniform(0, 6, size=(200, 3))
    hits = rng.random(200) < 0.5
    forward = new_map(Box.from_extent((6, 6, 6)), 0.5)
    backward = new_map(Box.from_extent((6, 6, 6)), 0.5)
    integrate_scan(forward, origin, Scan(endpoints, hits))
    integrate_scan(backward, origin, Scan(endpoints[::-1], hits[::-1]))
    np.testing.assert_array_equal(forward.log_odds, backward.log_odds)


def test_integrate_truncates_rays_leaving_map():
    omap = line_map()
    integrate_scan(omap, (0.5, 0.5, 0.5), [((15.0, 0.5, 0.5), True)])
    assert all(state(omap, (i, 0, 0)) is FREE for i in range(10))


def test_integrate_origin_outside():
    with pytest.raises(OutOfBoundsError):
        integrate_scan(line_map(), (-1, 0.5, 0.5), [((1, 0.5, 0.5), False)])


def test_state_updates():
    omap = line_map()
    assert state(omap, (3, 0, 0)) is UNK
    integrate_scan(omap, (0.5, 0.5, 0.5), [((3.5, 0.5, 0.5), True)])
    assert state(omap, (3, 0, 0)) is OCC
    assert state(omap, (2, 0, 0)) is FREE
    with pytest.raises(OutOfBoundsError):
        state(omap, (10, 0, 0))


def test_free_mask_follows_updates():
    omap = line_map()
    free = omap.free
    assert omap.free is free
    assert not free.any()
    integrate_scan(omap, (0.5, 0.5, 0.5), [((3.5, 0.5, 0.5), True)])
    assert omap.free is not free
    assert omap.free[1:3, 0, 0].all()
    assert not omap.free[3, 0, 0]


def test_mark_free_box():
    omap = new_map(Box.from_extent((3, 3, 3)), 0.3)
    changed = mark_free_box(omap, (1.5, 1.5, 1.5), (0.4, 0.4, 0.4))
    # a 0.8 m box centered on a voxel boundary covers 4 voxels per axis
    assert len(changed) == 64
    assert np.sum(omap.free) == 64
    assert state(omap, (5, 5, 5)) is FREE


def test_ray_cast(make_map):
    grid = np.full((10, 3, 3), FREE, dtype=np.uint8)
    omap = make_map(grid, 1.0)
    assert ray_cast(omap, (0.5, 1.5, 1.5), (9.5, 1.5, 1.5))

    grid[5, 1, 1] = OCC
    omap = make_map(grid, 1.0)
    assert not ray_cast(omap, (0.5, 1.5, 1.5), (9.5, 1.5, 1.5))

    grid[5, 1, 1] = UNK
    omap = make_map(grid, 1.0)
    assert not ray_cast(omap, (0.5, 1.5, 1.5), (9.5, 1.5, 1.5))
    # endpoint voxels never block
    assert ray_cast(omap, (0.5, 1.5, 1.5), (5.5, 1.5, 1.5))
    assert ray_cast(omap, (5.5, 1.5, 1.5), (6.5, 1.5, 1.5))


def test_ray_cast_outside_map():
    with pytest.raises(OutOfBoundsError):
        ray_cast(line_map(), (0.5, 0.5, 0.5), (10.5, 0.5, 0.5))


def test_ray_cast_symmetric_and_batched(rng, make_map):
    omap = make_map(random_grid(rng, (12, 12, 12), p=(0.85, 0.1, 0.05)))
    hi = np.array(omap.bounds.hi) - 1e-6
    starts = rng.uniform(0, hi, size=(400, 3))
    ends = rng.uniform(0, hi, size=(400, 3))
    batched = ray_cast_many(omap, starts, ends)
    reverse = ray_cast_many(omap, ends, starts)
    np.testing.assert_array_equal(batched, reverse)
    for s, e, b in zip(starts, ends, batched):
        assert ray_cast(omap, s, e) == b
        assert ray_cast(omap, e, s) == b

    shared = ray_cast_many(omap, starts[0], ends)
    for e, b in zip(ends, shared):
        assert ray_cast(omap, starts[0], e) == b


def crossed_voxels(omap, s, e):
    """Keys of the voxels whose interior the segment from s to e meets"""
    a, b = omap.to_grid(s), omap.to_grid(e)
    lo = np.floor(np.minimum(a, b)).astype(int)
    hi = np.floor(np.maximum(a, b)).astype(int)
    axes = [np.arange(i, j + 1) for i, j in zip(lo, hi)]
    keys = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, 3)
    d = b - a
    moving = d != 0
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = (keys - a) / d
        t1 = (keys + 1 - a) / d
    enter = np.where(moving, np.minimum(t0, t1), -np.inf)
    leave = np.where(moving, np.maximum(t0, t1), np.inf)
    t_in = np.maximum(enter.max(axis=1), 0.0)
    t_out = np.minimum(leave.min(axis=1), 1.0)
    return {tuple(k) for k in keys[t_out > t_in].tolist()}


def test_ray_cast_against_dense_sampling(rng, make_map):
    omap = make_map(random_grid(rng, (16, 16, 16), p=(0.8, 0.1, 0.1)))
    free = omap.free
    hi = np.array(omap.bounds.hi) - 1e-6
    for _ in range(10000):
        s, e = rng.uniform(0, hi, size=(2, 3))
        first, last = omap.key(s), omap.key(e)
        crossed = crossed_voxels(omap, s, e)

        # samples every tenth of a voxel land only in crossed voxels
        n = int(np.ceil(np.linalg.norm(e - s) / omap.resolution * 10)) + 1
        t = np.linspace(0, 1, n)[:, None]
        samples = np.floor(omap.to_grid(s + t * (e - s))).astype(int)
        assert {tuple(k) for k in samples.tolist()} <= crossed

        between = crossed - {first, last}
        expected = all(free[k] for k in between)
        assert ray_cast(omap, s, e) == expected


def test_coarse_free_identity(rng, make_map):
    omap = make_map(random_grid(rng, (8, 8, 8)))
    expected = set(map(tuple, np.argwhere(omap.free).tolist()))
    assert coarse_free_voxels(omap, 1) == expected


def test_coarse_free_conservative(make_map):
    grid = np.full((4, 4, 4), FREE, dtype=np.uint8)
    grid[1, 1, 1] = UNK
    omap = make_map(grid)
    assert coarse_free_voxels(omap, 2) == {
        (i, j, k)
        for i in range(2)
        for j in range(2)
        for k in range(2)
        if (i, j, k) != (0, 0, 0)
    }


def test_coarse_free_brute_force(rng, make_map):
    omap = make_map(random_grid(rng, (8, 8, 8), p=(0.97, 0.02, 0.01)))
    expected = set()
    for i in range(4):
        for j in range(4):
            for k in range(4):
                block = omap.free[
                    2 * i : 2 * i + 2, 2 * j : 2 * j + 2, 2 * k : 2 * k + 2
                ]
                if block.all():
                    expected.add((i, j, k))
    assert coarse_free_voxels(omap, 2) == expected


def test_coarse_free_partial_blocks(make_map):
    omap = make_map(np.full((6, 4, 4), FREE, dtype=np.uint8))
    assert coarse_free_grid(omap, 4).shape == (1, 1, 1)
    with pytest.raises(ValueError):
        coarse_free_grid(omap, 3)


def test_coverage_stats(rng, make_map, room_grid):
    omap = new_map(Box.from_extent((3, 3, 3)), 0.3)
    assert coverage_stats(omap) == (0.0, 0.0, 1.0)

    omap = make_map(room_grid((8, 8, 8)))
    assert coverage_stats(omap)[2] == 0.0
    assert sum(coverage_stats(omap)) == pytest.approx(1.0)

    grid = random_grid(rng, (10, 10, 10))
    free, occupied, unknown = coverage_stats(make_map(grid))
    assert free == pytest.approx(np.mean(grid == FREE))
    assert occupied == pytest.approx(np.mean(grid == OCC))
    assert unknown == pytest.approx(np.mean(grid == UNK))


def test_states_round_trip(rng, make_map, tmp_path):
    grid = random_grid(rng, (7, 5, 3))
    omap = make_map(grid)
    np.testing.assert_array_equal(state_grid(omap), grid)

    save_map(omap, tmp_path / "map.voxw")
    loaded = load_map(tmp_path / "map.voxw")
    assert loaded.shape == (7, 5, 3)
    assert loaded.resolution == pytest.approx(0.3)
    np.testing.assert_array_equal(state_grid(loaded), grid)


def test_voxw_layout():
    grid = np.zeros((3, 2, 2), dtype=np.uint8)
    grid[1, 0, 0] = 1
    grid[0, 1, 0] = 2
    f = io.BytesIO()
    voxw.dump(grid, 0.25, f)
    data = f.getvalue()
    assert data[:4] == b"VOXW"
    assert data[4] == 1
    assert len(data) == 4 + 1 + 12 + 4 + 12
    # x varies fastest
    assert data[21:27] == bytes([0, 1, 0, 2, 0, 0])


@pytest.mark.parametrize(
    "data", [b"VOX", b"XXXX" + bytes(17), b"VOXW\x02" + bytes(16)]
)
def test_voxw_rejects_bad_files(data):
    with pytest.raises(ValueError):
        voxw.load(io.BytesIO(data))


def test_voxw_truncated_body():
    f = io.BytesIO()
    voxw.dump(np.zeros((2, 2, 2), dtype=np.uint8), 0.3, f)
    with pytest.raises(ValueError):
        voxw.load(io.BytesIO(f.getvalue()[:-1]))


def test_box_helpers():
    assert box_radius(0.3, (0.5, 0.5, 0.35)) == (2, 2, 1)
    assert box_radius(1.0, (0.5, 0.5, 0.5)) == (0, 0, 0)
    assert coarse_factor(0.8, 0.3) == 4
    assert coarse_factor(0.3, 0.3) == 1

    mask = np.ones((5, 5, 5), dtype=bool)
    valid = box_all(mask, (1, 1, 1))
    assert valid.sum() == 27
    assert valid[2, 2, 2] and not valid[0, 2, 2]


def test_box_range_matches_overlap(rng):
    omap = new_map(Box.from_extent((3, 3, 3)), 0.3)
    half = np.array([0.4, 0.4, 0.35])
    for _ in range(200):
        center = rng.uniform(0.5, 2.5, size=3)
        lo, hi = omap.box_range(center, half)
        for axis in range(3):
            for i in range(-2, 12):
                a, b = i * 0.3, (i + 1) * 0.3
                overlaps = (
                    a < center[axis] + half[axis]
                    and b > center[axis] - half[axis]
                )
                assert overlaps == (lo[axis] <= i <= hi[axis])


def test_center_and_key():
    omap = new_map(Box((1, 1, 1), (4, 4, 4)), 0.5)
    assert omap.key((1.0, 1.0, 1.0)) == (0, 0, 0)
    assert omap.key((3.99, 1.6, 2.0)) == (5, 1, 2)
    np.testing.assert_allclose(omap.center([(0, 1, 2)]), [[1.25, 1.75, 2.25]])
    with pytest.raises(OutOfBoundsError):
        omap.key((4.0, 1.0, 1.0))
    assert math.isclose(omap.resolution, 0.5)

