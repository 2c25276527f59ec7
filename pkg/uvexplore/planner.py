import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from uvexplore.occupancy import Box, OccupancyMap
from uvexplore.sensors import AgentSpec
from uvexplore.viewpoint import Path, Viewpoint, wrap_angle

logger = logging.getLogger(__name__)

_EPS = 1e-9


@dataclass(frozen=True)
class RRTParams:
    """
    Plain RRT settings. `step` is the extension length in
    meters and defaults to two voxels of the planning map.
    """

    goal_bias: float = 0.1
    step: Optional[float] = None
    max_iterations: int = 5000

    def __post_init__(self):
        if not 0 <= self.goal_bias <= 1:
            raise ValueError(f"Goal bias {self.goal_bias} outside [0, 1]")
        if self.step is not None and not self.step > 0:
            raise ValueError(f"RRT step must be positive, got {self.step}")
        if self.max_iterations < 1:
            raise ValueError(
                f"Iteration budget must be positive, got {self.max_iterations}"
            )


def is_state_valid(
    omap: OccupancyMap, agent: AgentSpec, q: Viewpoint
) -> bool:
    """
    True iff every voxel intersecting the agent's collision box
    centered at `q` is Free. Boxes that leave the map are
    invalid.
    """
    lo, hi = omap.box_range(q.position, agent.half_extents)
    if np.any(lo < 0) or np.any(hi >= np.array(omap.shape)):
        return False
    box = tuple(slice(a, b + 1) for a, b in zip(lo, hi))
    return bool(omap.free[box].all())


def _position_valid(
    omap: OccupancyMap, agent: AgentSpec, p: np.ndarray
) -> bool:
    return is_state_valid(omap, agent, Viewpoint(*map(float, p)))


def segment_valid(
    omap: OccupancyMap,
    agent: AgentSpec,
    a: np.ndarray,
    b: np.ndarray,
    step: Optional[float] = None,
) -> bool:
    """Check every interpolated state between `a` and `b` at `step`"""
    step = step or omap.resolution
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    n = max(1, int(math.ceil(np.linalg.norm(b - a) / step - _EPS)))
    for t in np.linspace(0.0, 1.0, n + 1):
        if not _position_valid(omap, agent, a + t * (b - a)):
            return False
    return True


def path_valid(
    omap: OccupancyMap, agent: AgentSpec, path: Path
) -> bool:
    """Every state of `path` interpolated at one voxel spacing is valid"""
    points = path.positions()
    if len(points) == 1:
        return _position_valid(omap, agent, points[0])
    return all(
        segment_valid(omap, agent, a, b) for a, b in zip(points, points[1:])
    )


def _build_path(
    nodes: np.ndarray, parents: List[int], leaf: int, q0, q_goal
) -> Path:
    chain = []
    while leaf >= 0:
        chain.append(leaf)
        leaf = parents[leaf]
    points = [nodes[i] for i in reversed(chain)] + [q_goal.as_array()]
    viewpoints = [q0]
    for i in range(1, len(points) - 1):
        prev, p = points[i - 1], points[i]
        yaw = math.atan2(p[1] - prev[1], p[0] - prev[0])
        viewpoints.append(Viewpoint(*map(float, p), yaw))
    viewpoints.append(q_goal)
    return Path(tuple(viewpoints))


def plan_rrt(
    omap: OccupancyMap,
    agent: AgentSpec,
    q0: Viewpoint,
    q_goal: Viewpoint,
    seed: int = 0,
    params: RRTParams = RRTParams(),
    domain: Optional[Box] = None,
) -> Optional[Path]:
    """
    Collision-free path from `q0` to `q_goal` with plain RRT.

    The tree samples uniformly from `domain` (the map bounds by
    default) and is steered toward the goal with probability
    `goal_bias`. A straight connection is tried first. Ground
    agents plan in the horizontal plane of `q0`. Every edge is
    checked at half-voxel spacing. Intermediate viewpoints face
    along the direction of travel.

    Returns:
        The path, or None when the endpoints are invalid or no
        path was found within the iteration budget
    """
    if not is_state_valid(omap, agent, q0):
        logger.debug(f"{agent.name} start {q0} is not a valid state")
        return None
    if not is_state_valid(omap, agent, q_goal):
        logger.debug(f"{agent.name} goal {q_goal} is not a valid state")
        return None
    if agent.is_ground and not math.isclose(q0.z, q_goal.z):
        raise ValueError(
            f"Ground agent start height {q0.z} differs from goal "
            f"height {q_goal.z}"
        )

    check = omap.resolution / 2
    start, goal = q0.as_array(), q_goal.as_array()
    if segment_valid(omap, agent, start, goal, check):
        return Path((q0, q_goal))

    step = params.step or 2 * omap.resolution
    domain = domain or omap.bounds
    lo = np.maximum(np.array(domain.lo), omap.bounds.lo)
    hi = np.minimum(np.array(domain.hi), omap.bounds.hi)
    if agent.is_ground:
        lo[2] = hi[2] = q0.z

    rng = np.random.default_rng(seed)
    nodes = np.empty((params.max_iterations + 1, 3))
    nodes[0] = start
    parents = [-1]
    for it in range(params.max_iterations):
        if rng.random() < params.goal_bias:
            sample = goal
        else:
            sample = rng.uniform(lo, hi)
        tree = nodes[: len(parents)]
        nearest = int(np.argmin(np.sum((tree - sample) ** 2, axis=1)))
        direction = sample - tree[nearest]
        dist = np.linalg.norm(direction)
        if dist < _EPS:
            continue
        new = tree[nearest] + direction * min(1.0, step / dist)
        if not segment_valid(omap, agent, tree[nearest], new, check):
            continue
        nodes[len(parents)] = new
        parents.append(nearest)

        if np.linalg.norm(goal - new) <= step and segment_valid(
            omap, agent, new, goal, check
        ):
            logger.debug(
                f"RRT for {agent.name} reached goal after {it + 1} "
                f"iterations with {len(parents)} nodes"
            )
            return _build_path(
                nodes, parents, len(parents) - 1, q0, q_goal
            )

    logger.debug(
        f"RRT for {agent.name} failed after {params.max_iterations} "
        f"iterations with {len(parents)} nodes"
    )
    return None


def densify(path: Path, spacing: float = 0.9) -> Path:
    """
    Insert viewpoints so that consecutive viewpoints are at most
    `spacing` meters apart. Positions are interpolated linearly
    and yaw along the shorter arc; original viewpoints are kept.
    """
    if not spacing > 0:
        raise ValueError(f"Spacing must be positive, got {spacing}")
    viewpoints = [path.start]
    for a, b in zip(path.viewpoints[:-1], path.viewpoints[1:]):
        n = max(1, int(math.ceil(a.distance(b) / spacing - _EPS)))
        turn = wrap_angle(b.yaw - a.yaw)
        pa, pb = a.as_array(), b.as_array()
        for j in range(1, n):
            t = j / n
            p = pa + t * (pb - pa)
            yaw = wrap_angle(a.yaw + t * turn)
            viewpoints.append(Viewpoint(*map(float, p), yaw))
        viewpoints.append(b)
    return Path(tuple(viewpoints))
