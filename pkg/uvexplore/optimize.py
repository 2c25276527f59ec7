"""
Information gain of viewpoints and paths, and yaw optimization
of aerial paths against a smooth surrogate of the visible
frontier count.

The surrogate replaces each hard field-of-view test with a
logistic, so a frontier at distance `d`, yaw-relative azimuth
`a` and elevation `e` contributes

    expit(k_d (d_max - d)) * expit(k_a (fov_h / 2 - |a|))
        * expit(k_a (fov_v / 2 - |e|))

Occlusion is not part of the surrogate: it is evaluated once
per viewpoint position with binary ray casts, since only yaws
move during optimization.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Sequence, Set, Tuple

import numpy as np
from scipy.special import expit

from uvexplore.frontiers import FrontierSet
from uvexplore.occupancy import (
    OccupancyMap,
    VoxelKey,
    map_keys,
    ray_cast_many,
)
from uvexplore.sensors import AgentSpec, SensorModel
from uvexplore.viewpoint import Path, Viewpoint, wrap_angle

logger = logging.getLogger(__name__)

# headings tried for every interior viewpoint before gradient ascent
SEED_HEADINGS = 16
ARMIJO_C = 1e-4
SHRINK = 0.5
MIN_STEP = 1e-10
GRADIENT_TOL = 1e-6


@dataclass(frozen=True)
class SoftVisibilityParams:
    k_d: float = 5.0
    k_a: float = 20.0

    def __post_init__(self):
        if not (self.k_d > 0 and self.k_a > 0):
            raise ValueError(
                f"Sharpness values must be positive, got "
                f"k_d={self.k_d}, k_a={self.k_a}"
            )


@dataclass(frozen=True)
class PathIG:
    """Information gain of a path as per-viewpoint contributions"""

    contributions: Tuple[float, ...]

    @property
    def value(self) -> float:
        return sum(self.contributions)


def visible_frontiers(
    omap: OccupancyMap,
    frontiers: FrontierSet,
    position: Sequence[float],
    radius: float,
) -> FrontierSet:
    """
    Frontiers within `radius` of `position` whose voxel centers
    can be reached by a ray through Free voxels only
    """
    keys = frontiers.as_array()
    if not len(keys):
        return FrontierSet(frozenset())
    points = omap.center(keys)
    near = np.linalg.norm(points - np.asarray(position), axis=1) <= radius
    keys, points = keys[near], points[near]
    visible = ray_cast_many(omap, position, points)
    return FrontierSet(frozenset(map_keys(keys[visible])))


def _angles(
    q: Viewpoint, points: np.ndarray
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Distance, yaw-relative azimuth and elevation of `points` from `q`"""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    offset = points - q.as_array()
    r = np.hypot(offset[:, 0], offset[:, 1])
    dist = np.hypot(r, offset[:, 2])
    azimuth = np.arctan2(offset[:, 1], offset[:, 0]) - q.yaw
    azimuth = (azimuth + np.pi) % (2 * np.pi) - np.pi
    return dist, azimuth, np.arctan2(offset[:, 2], r)


def in_field_of_view(
    sensor: SensorModel, q: Viewpoint, points: np.ndarray
) -> np.ndarray:
    dist, azimuth, elevation = _angles(q, points)
    inside = (dist <= sensor.d_max) & (
        np.abs(elevation) <= sensor.fov_v / 2
    )
    if not sensor.omnidirectional:
        inside &= np.abs(azimuth) <= sensor.fov_h / 2
    return inside


def visible_keys(
    omap: OccupancyMap,
    frontiers: FrontierSet,
    sensor: SensorModel,
    q: Viewpoint,
) -> Set[VoxelKey]:
    """Frontiers inside the sensor's view from `q` and not occluded"""
    candidates = visible_frontiers(omap, frontiers, q.position, sensor.d_max)
    if not len(candidates):
        return set()
    keys = candidates.as_array()
    inside = in_field_of_view(sensor, q, omap.center(keys))
    return set(map_keys(keys[inside]))


def hard_visible_count(
    omap: OccupancyMap,
    frontiers: FrontierSet,
    sensor: SensorModel,
    q: Viewpoint,
) -> int:
    return len(visible_keys(omap, frontiers, sensor, q))


def hard_path_ig(
    omap: OccupancyMap,
    frontiers: FrontierSet,
    sensor: SensorModel,
    path: Path,
) -> PathIG:
    return PathIG(
        tuple(hard_visible_count(omap, frontiers, sensor, q) for q in path)
    )


def unique_frontiers_seen(
    omap: OccupancyMap,
    frontiers: FrontierSet,
    sensor: SensorModel,
    path: Path,
) -> int:
    """Number of distinct frontiers visible from any viewpoint of `path`"""
    seen: Set[VoxelKey] = set()
    for q in path:
        seen |= visible_keys(omap, frontiers, sensor, q)
    return len(seen)


def _factors(q, points, sensor, params):
    dist, azimuth, elevation = _angles(q, points)
    f_d = expit(params.k_d * (sensor.d_max - dist))
    f_e = expit(params.k_a * (sensor.fov_v / 2 - np.abs(elevation)))
    if sensor.omnidirectional:
        f_a = np.ones_like(dist)
    else:
        f_a = expit(params.k_a * (sensor.fov_h / 2 - np.abs(azimuth)))
    return f_d, f_a, f_e, azimuth


def soft_ig(
    q: Viewpoint,
    visible: np.ndarray,
    sensor: SensorModel,
    params: SoftVisibilityParams = SoftVisibilityParams(),
) -> float:
    """
    Smooth visible frontier count of `q` over the precomputed
    unoccluded frontier centers `visible`
    """
    if not len(visible):
        return 0.0
    f_d, f_a, f_e, _ = _factors(q, visible, sensor, params)
    return float(np.sum(f_d * f_a * f_e))


def soft_ig_yaw_gradient(
    q: Viewpoint,
    visible: np.ndarray,
    sensor: SensorModel,
    params: SoftVisibilityParams = SoftVisibilityParams(),
) -> float:
    """
    Analytic derivative of `soft_ig` with respect to yaw. The
    subgradient 0 is used for frontiers dead ahead.
    """
    if not len(visible) or sensor.omnidirectional:
        return 0.0
    f_d, f_a, f_e, azimuth = _factors(q, visible, sensor, params)
    d_a = f_a * (1 - f_a) * params.k_a * np.sign(azimuth)
    return float(np.sum(f_d * d_a * f_e))


def _seed_yaw(q, visible, sensor, params) -> float:
    best, best_value = q.yaw, soft_ig(q, visible, sensor, params)
    for k in range(SEED_HEADINGS):
        yaw = -math.pi + 2 * math.pi * k / SEED_HEADINGS
        value = soft_ig(q.with_yaw(yaw), visible, sensor, params)
        if value > best_value:
            best, best_value = yaw, value
    return best


def optimize_path_yaw(
    path: Path,
    omap: OccupancyMap,
    frontiers: FrontierSet,
    agent: AgentSpec,
    params: SoftVisibilityParams = SoftVisibilityParams(),
    max_iters: int = 100,
) -> Tuple[Path, PathIG]:
    """
    Maximize the smooth information gain of `path` over the yaws
    of its interior viewpoints.

    Each interior yaw starts from the best of a fixed set of
    headings and then follows gradient ascent with a backtracking
    line search. Positions and the yaws of the first and last
    viewpoints never change. If the optimized yaws see fewer
    frontiers (hard count) than the input, the input is returned.

    Returns:
        The optimized path and its hard information gain
    """
    if agent.is_ground:
        raise ValueError(
            f"Agent {agent.name} is a ground agent, yaws are not optimized"
        )
    sensor = agent.sensor
    before = hard_path_ig(omap, frontiers, sensor, path)
    if len(path) <= 2 or not len(frontiers):
        return path, before

    interior = list(path.viewpoints[1:-1])
    masks: List[np.ndarray] = []
    for q in interior:
        seen = visible_frontiers(omap, frontiers, q.position, sensor.d_max)
        masks.append(omap.center(seen.as_array()))

    def objective(yaws):
        return sum(
            soft_ig(q.with_yaw(y), m, sensor, params)
            for q, m, y in zip(interior, masks, yaws)
        )

    def gradient(yaws):
        return np.array(
            [
                soft_ig_yaw_gradient(q.with_yaw(y), m, sensor, params)
                for q, m, y in zip(interior, masks, yaws)
            ]
        )

    yaws = np.array(
        [_seed_yaw(q, m, sensor, params) for q, m in zip(interior, masks)]
    )
    value = objective(yaws)
    for it in range(max_iters):
        g = gradient(yaws)
        norm2 = float(g @ g)
        if math.sqrt(norm2) < GRADIENT_TOL:
            break
        alpha = 1.0
        while alpha > MIN_STEP:
            trial = np.array([wrap_angle(y) for y in yaws + alpha * g])
            trial_value = objective(trial)
            if trial_value >= value + ARMIJO_C * alpha * norm2:
                break
            alpha *= SHRINK
        else:
            break
        yaws, value = trial, trial_value

    optimized = Path(
        (path.start,)
        + tuple(q.with_yaw(float(y)) for q, y in zip(interior, yaws))
        + (path.goal,)
    )
    after = hard_path_ig(omap, frontiers, sensor, optimized)
    logger.debug(
        f"Yaw optimization of {len(interior)} viewpoints: soft IG "
        f"{value:.2f}, hard IG {before.value} -> {after.value}"
    )
    if after.value < before.value:
        return path, before
    return optimized, after
