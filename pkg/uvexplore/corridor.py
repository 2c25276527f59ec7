import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import ndimage

from uvexplore.frontiers import FrontierSet
from uvexplore.occupancy import (
    Box,
    OccupancyMap,
    VoxelKey,
    box_all,
    box_radius,
    coarse_factor,
    coarse_free_grid,
    ray_cast_many,
)
from uvexplore.sensors import AgentSpec
from uvexplore.viewpoint import Viewpoint

logger = logging.getLogger(__name__)

# corridor cells are ray cast in nearest-first batches of this size
WITNESS_BATCH = 32


@dataclass(frozen=True)
class Corridor:
    """
    Known-free cells reachable by `agent`. For ground agents
    `keys` are base voxels of the sensor layer and `centers`
    sit at the sensor height; for aerial agents `keys` index
    coarse blocks of `cell_size` meters.
    """

    agent: AgentSpec
    keys: np.ndarray
    centers: np.ndarray
    cell_size: float

    def __len__(self) -> int:
        return len(self.keys)

    @property
    def key_set(self) -> Set[VoxelKey]:
        return set(map(VoxelKey._make, self.keys.tolist()))

    def bounding_box(self) -> Optional[Box]:
        """Tight box around the corridor cells, or None when empty"""
        if not len(self):
            return None
        half = self.cell_size / 2
        lo, hi = self.centers.min(axis=0), self.centers.max(axis=0)
        if self.agent.is_ground:
            return Box((lo[0] - half, lo[1] - half, lo[2]), (
                hi[0] + half, hi[1] + half, hi[2]
            ))
        return Box(lo - half, hi + half)

    @classmethod
    def empty(cls, agent: AgentSpec, cell_size: float) -> "Corridor":
        return cls(
            agent, np.zeros((0, 3), np.int64), np.zeros((0, 3)), cell_size
        )


def sensor_layer(omap: OccupancyMap, agent: AgentSpec) -> int:
    """Index of the z-layer that contains a ground agent's sensor"""
    z = (agent.sensor_height - omap.bounds.lo[2]) / omap.resolution
    return int(math.floor(z))


def ugv_corridor(
    omap: OccupancyMap, agent: AgentSpec, q0: Viewpoint
) -> Corridor:
    """
    Cells of the sensor layer whose collision box is entirely
    Free, restricted to the 4-connected component holding q0.
    An empty corridor means the agent is stuck.
    """
    if not agent.is_ground:
        raise ValueError(f"Agent {agent.name} is not a ground agent")
    layer = sensor_layer(omap, agent)
    radius = box_radius(omap.resolution, agent.half_extents)
    valid = box_all(omap.free, radius)[:, :, layer]

    start = omap.key((q0.x, q0.y, agent.sensor_height))
    if not valid[start.ix, start.iy]:
        logger.warning(f"{agent.name} start cell {start} is not valid")
        return Corridor.empty(agent, omap.resolution)

    labels, _ = ndimage.label(valid)
    cells = np.argwhere(labels == labels[start.ix, start.iy])
    keys = np.column_stack([cells, np.full(len(cells), layer)])
    centers = omap.center(keys)
    centers[:, 2] = agent.sensor_height
    return Corridor(agent, keys, centers, omap.resolution)


def uav_corridor(
    omap: OccupancyMap, agent: AgentSpec, q0: Viewpoint
) -> Corridor:
    """
    Fully Free aligned blocks at least as large as the agent's
    collision geometry, restricted to the 6-connected component
    holding q0.
    """
    if agent.is_ground:
        raise ValueError(f"Agent {agent.name} is not an aerial agent")
    factor = coarse_factor(agent.collision_edge, omap.resolution)
    cell_size = factor * omap.resolution
    grid = coarse_free_grid(omap, factor)

    start = np.floor(omap.to_grid(q0.position) / factor).astype(int)
    inside = np.all((start >= 0) & (start < np.array(grid.shape)))
    if not inside or not grid[tuple(start)]:
        logger.warning(f"{agent.name} start block {tuple(start)} not free")
        return Corridor.empty(agent, cell_size)

    structure = ndimage.generate_binary_structure(3, 1)
    labels, _ = ndimage.label(grid, structure=structure)
    keys = np.argwhere(labels == labels[tuple(start)])
    centers = omap.origin + (keys + 0.5) * cell_size
    return Corridor(agent, keys, centers, cell_size)


def feasible_mask(
    agent: AgentSpec, frontiers: np.ndarray, candidates: np.ndarray
) -> np.ndarray:
    """
    Vectorized `feasible_region_contains` over broadcastable
    arrays of frontier points and candidate sensor positions
    """
    frontiers = np.asarray(frontiers, dtype=np.float64)
    candidates = np.asarray(candidates, dtype=np.float64)
    d_max = agent.sensor.d_max
    half_fov = agent.sensor.fov_v / 2
    offset = frontiers - candidates
    r = np.hypot(offset[..., 0], offset[..., 1])
    if agent.is_ground:
        dh = frontiers[..., 2] - agent.sensor_height
        return (r**2 + dh**2 <= d_max**2) & (
            np.abs(dh) <= r * math.tan(half_fov)
        )
    dz = offset[..., 2]
    elevation = np.arctan2(dz, r)
    return (r**2 + dz**2 <= d_max**2) & (np.abs(elevation) <= half_fov)


def feasible_region_contains(
    agent: AgentSpec, frontier: Sequence[float], candidate: Sequence[float]
) -> bool:
    """
    Whether a frontier at `frontier` is within range and within
    the vertical field of view of the agent's sensor placed at
    `candidate`, occlusion aside. A ground agent's sensor is at
    its sensor height whatever the candidate's z; an aerial
    agent's yaw is free, so only elevation matters.
    """
    return bool(feasible_mask(agent, frontier, candidate))


@dataclass(frozen=True)
class Distribution:
    """
    Frontiers assigned to each agent, with the corridor cell
    center that witnesses each assignment
    """

    ugv: FrontierSet
    uav: FrontierSet
    witnesses: Dict[VoxelKey, Tuple[float, float, float]] = field(
        default_factory=dict
    )


def _witness(
    omap: OccupancyMap, agent: AgentSpec, point: np.ndarray, corridor
) -> Optional[np.ndarray]:
    feasible = np.flatnonzero(feasible_mask(agent, point, corridor.centers))
    if not len(feasible):
        return None
    dist = np.linalg.norm(corridor.centers[feasible] - point, axis=1)
    ordered = feasible[np.argsort(dist, kind="stable")]
    for i in range(0, len(ordered), WITNESS_BATCH):
        batch = corridor.centers[ordered[i : i + WITNESS_BATCH]]
        visible = ray_cast_many(omap, point, batch)
        if visible.any():
            return batch[int(np.argmax(visible))]
    return None


def assign_frontiers(
    keys: Sequence[VoxelKey],
    corridor: Optional[Corridor],
    omap: OccupancyMap,
    threads: int = 1,
) -> Dict[VoxelKey, Tuple[float, float, float]]:
    """
    Frontier distribution for one agent: keep every frontier
    that some feasible corridor cell can see, mapped to the
    nearest such cell's center.
    """
    if corridor is None or not len(corridor) or not len(keys):
        return {}
    points = omap.center(np.array(keys))

    def find(point):
        return _witness(omap, corridor.agent, point, corridor)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            found = list(pool.map(find, points))
    else:
        found = [find(p) for p in points]
    return {
        key: tuple(map(float, w))
        for key, w in zip(keys, found)
        if w is not None
    }


def distribute_frontiers(
    frontiers: FrontierSet,
    ugv_corr: Optional[Corridor],
    uav_corr: Optional[Corridor],
    omap: OccupancyMap,
    threads: int = 1,
) -> Distribution:
    """
    Split the frontiers between the ground and aerial agents.
    Ground assignment runs first over every frontier; the aerial
    agent is then assigned from the remainder, so the two sets
    are disjoint. Pass `None` for an agent that is not part of
    the team.
    """
    keys = sorted(frontiers.keys)
    ugv = assign_frontiers(keys, ugv_corr, omap, threads)
    rest = [k for k in keys if k not in ugv]
    uav = assign_frontiers(rest, uav_corr, omap, threads)
    logger.debug(
        f"Distributed {len(keys)} frontiers: {len(ugv)} to the ground "
        f"agent, {len(uav)} to the aerial agent"
    )
    return Distribution(
        FrontierSet(frozenset(ugv)),
        FrontierSet(frozenset(uav)),
        {**ugv, **uav},
    )
