import itertools
import math

import numpy as np
import pytest

from uvexplore.occupancy import OccupancyState
from uvexplore.planner import (
    RRTParams,
    densify,
    is_state_valid,
    path_valid,
    plan_rrt,
    segment_valid,
)
from uvexplore.viewpoint import Path, Viewpoint, wrap_angle

FREE, OCC, UNK = (
    OccupancyState.FREE,
    OccupancyState.OCCUPIED,
    OccupancyState.UNKNOWN,
)


def overlapped(center, half, resolution, n):
    """Indices along one axis whose voxel interior meets the box"""
    return [
        i
        for i in range(-3, n + 3)
        if i * resolution < center + half
        and (i + 1) * resolution > center - half
    ]


def brute_valid(omap, agent, q):
    axes = [
        overlapped(c, h, omap.resolution, n)
        for c, h, n in zip(q.position, agent.half_extents, omap.shape)
    ]
    free = omap.free
    for key in itertools.product(*axes):
        if any(not 0 <= i < n for i, n in zip(key, omap.shape)):
            return False
        if not free[key]:
            return False
    return True


@pytest.fixture
def gap_wall(make_map):
    """Open space split by a wall at x = 12 with a window in it"""
    grid = np.full((24, 24, 12), FREE, dtype=np.uint8)
    grid[12] = OCC
    grid[12, 8:18, 2:11] = FREE
    return make_map(grid)


def test_state_validity(make_map, uav):
    grid = np.full((10, 10, 10), FREE, dtype=np.uint8)
    omap = make_map(grid)
    assert is_state_valid(omap, uav, Viewpoint(1.5, 1.5, 1.5))
    assert not is_state_valid(omap, uav, Viewpoint(0.2, 1.5, 1.5))
    assert not is_state_valid(omap, uav, Viewpoint(1.5, 1.5, 2.9))

    grid[5, 5, 5] = UNK
    omap = make_map(grid)
    assert not is_state_valid(omap, uav, Viewpoint(1.5, 1.5, 1.5))
    assert is_state_valid(omap, uav, Viewpoint(0.6, 0.6, 0.6))


def test_state_validity_matches_brute_force(rng, make_map, uav, ugv):
    grid = rng.choice(
        np.array([FREE, OCC, UNK], dtype=np.uint8),
        (12, 12, 12),
        p=(0.995, 0.003, 0.002),
    )
    omap = make_map(grid)
    for _ in range(300):
        x, y, z = rng.uniform(-0.2, 3.8, size=3)
        for agent in (uav, ugv):
            q = Viewpoint(x, y, z)
            assert is_state_valid(omap, agent, q) == brute_valid(
                omap, agent, q
            )


def test_segment_validity(gap_wall, uav):
    a = np.array([1.5, 1.5, 1.8])
    assert not segment_valid(gap_wall, uav, a, [5.7, 1.5, 1.8])
    assert segment_valid(gap_wall, uav, a, [3.0, 1.5, 1.8])
    # straight through the window
    assert segment_valid(gap_wall, uav, [1.5, 3.9, 1.8], [5.7, 3.9, 1.8])


def test_straight_line_plan(make_map, uav):
    omap = make_map(np.full((16, 16, 16), FREE, dtype=np.uint8))
    q0, goal = Viewpoint(1.0, 1.0, 1.0), Viewpoint(3.5, 2.0, 3.0, 1.0)
    path = plan_rrt(omap, uav, q0, goal)
    assert path.viewpoints == (q0, goal)


def test_plan_through_window(gap_wall, uav):
    q0 = Viewpoint(1.5, 1.5, 1.8, 0.5)
    goal = Viewpoint(5.7, 1.5, 1.8, -1.0)
    path = plan_rrt(gap_wall, uav, q0, goal, seed=7)
    assert path is not None
    assert len(path) > 2
    assert path.start == q0 and path.goal == goal
    assert path_valid(gap_wall, uav, path)
    for a, b in zip(path.positions(), path.positions()[1:]):
        assert segment_valid(gap_wall, uav, a, b, 0.15)

    again = plan_rrt(gap_wall, uav, q0, goal, seed=7)
    np.testing.assert_array_equal(path.positions(), again.positions())


def test_plan_into_sealed_chamber(make_map, uav):
    grid = np.full((24, 24, 12), FREE, dtype=np.uint8)
    grid[15:23, 15:23] = OCC
    grid[16:22, 16:22] = FREE
    omap = make_map(grid)
    q0, goal = Viewpoint(1.5, 1.5, 1.8), Viewpoint(5.7, 5.7, 1.8)
    assert is_state_valid(omap, uav, goal)
    params = RRTParams(max_iterations=300)
    assert plan_rrt(omap, uav, q0, goal, params=params) is None


def test_plan_from_invalid_state(gap_wall, uav):
    inside = Viewpoint(3.75, 1.0, 1.0)
    assert plan_rrt(gap_wall, uav, inside, Viewpoint(1.5, 1.5, 1.8)) is None
    assert plan_rrt(gap_wall, uav, Viewpoint(1.5, 1.5, 1.8), inside) is None


def test_ground_plan_stays_in_plane(make_map, room_grid, ugv):
    grid = room_grid((20, 22, 8))
    grid[10, :15] = OCC
    omap = make_map(grid)
    q0 = Viewpoint(1.05, 1.05, 0.75)
    goal = Viewpoint(4.95, 1.05, 0.75)
    path = plan_rrt(omap, ugv, q0, goal, seed=1)
    assert path is not None
    assert path_valid(omap, ugv, path)
    np.testing.assert_array_equal(path.positions()[:, 2], 0.75)
    assert path.positions()[:, 1].max() > 15 * 0.3

    with pytest.raises(ValueError):
        plan_rrt(omap, ugv, q0, Viewpoint(4.95, 1.05, 0.9))


@pytest.mark.parametrize(
    "kwargs",
    [dict(goal_bias=1.5), dict(step=0.0), dict(max_iterations=0)],
)
def test_rrt_params_validation(kwargs):
    with pytest.raises(ValueError):
        RRTParams(**kwargs)


def test_densify_spacing():
    path = Path((Viewpoint(0, 0, 0), Viewpoint(3, 0, 0)))
    dense = densify(path, 1.0)
    np.testing.assert_allclose(dense.positions()[:, 0], [0, 1, 2, 3])

    assert densify(path, 3.0) == path
    assert densify(path, 10.0) == path
    with pytest.raises(ValueError):
        densify(path, 0.0)


def test_densify_keeps_waypoints(rng):
    points = rng.uniform(0, 10, size=(6, 3))
    yaws = rng.uniform(-math.pi, math.pi, size=6)
    path = Path(
        tuple(
            Viewpoint(*map(float, p), float(y)) for p, y in zip(points, yaws)
        )
    )
    dense = densify(path, 0.9)
    assert set(path.viewpoints) <= set(dense.viewpoints)
    assert dense.start == path.start and dense.goal == path.goal
    steps = np.linalg.norm(np.diff(dense.positions(), axis=0), axis=1)
    assert np.all(steps <= 0.9 + 1e-9)
    assert dense.length == pytest.approx(path.length)


def test_densify_turns_the_short_way():
    a = Viewpoint(0, 0, 0, math.radians(350))
    b = Viewpoint(1, 0, 0, math.radians(10))
    dense = densify(Path((a, b)), 0.1)
    assert len(dense) == 11
    for q in dense.viewpoints[1:-1]:
        assert abs(wrap_angle(q.yaw)) <= math.radians(10) + 1e-9
