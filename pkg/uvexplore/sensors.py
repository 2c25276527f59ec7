import logging
import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from uvexplore.occupancy import (
    Scan,
    box_all,
    box_radius,
    clip_to_grid,
    coarse_factor,
)
from uvexplore.traversal import traverse_batch
from uvexplore.viewpoint import Viewpoint
from uvexplore.world import GroundTruthWorld

logger = logging.getLogger(__name__)

# distance, in voxels, that hit endpoints are pushed past the
# boundary of the voxel they hit
_HIT_NUDGE = 1e-4


class SensorKind(Enum):
    FRUSTUM_CAMERA = "camera"
    LIDAR_360 = "lidar"


class Motion(Enum):
    GROUND = "ground"
    AERIAL = "aerial"


@dataclass(frozen=True)
class SensorModel:
    kind: SensorKind
    d_max: float
    fov_h: float
    fov_v: float
    rays_h: int
    rays_v: int

    def __post_init__(self):
        if not self.d_max > 0:
            raise ValueError(f"Sensor range must be positive: {self.d_max}")
        if not 0 < self.fov_v <= math.pi:
            raise ValueError(f"Vertical FOV {self.fov_v} outside (0, pi]")
        if self.kind is SensorKind.FRUSTUM_CAMERA:
            if not 0 < self.fov_h <= math.pi:
                raise ValueError(
                    f"Camera horizontal FOV {self.fov_h} outside (0, pi]"
                )
        elif not math.isclose(self.fov_h, 2 * math.pi):
            raise ValueError(
                f"360 degree lidar needs fov_h = 2pi, got {self.fov_h}"
            )
        if self.rays_h < 1 or self.rays_v < 1:
            raise ValueError(
                f"Ray counts must be positive, got {self.rays_h}x{self.rays_v}"
            )

    @property
    def omnidirectional(self) -> bool:
        return self.kind is SensorKind.LIDAR_360

    def directions(self, yaw: float) -> np.ndarray:
        """
        Unit ray directions, one per (azimuth, elevation) pair,
        uniformly spanning the field of view rotated by `yaw`
        """
        azimuth = yaw + self.fov_h * (
            (np.arange(self.rays_h) + 0.5) / self.rays_h - 0.5
        )
        elevation = self.fov_v * (
            (np.arange(self.rays_v) + 0.5) / self.rays_v - 0.5
        )
        az, el = np.meshgrid(azimuth, elevation, indexing="ij")
        az, el = az.reshape(-1), el.reshape(-1)
        return np.stack(
            [np.cos(el) * np.cos(az), np.cos(el) * np.sin(az), np.sin(el)],
            axis=1,
        )


@dataclass(frozen=True)
class AgentSpec:
    """
    A robot of the team. Ground agents carry their sensor at
    the fixed height `sensor_height` (h0); aerial agents fly
    at any height.
    """

    name: str
    motion: Motion
    sensor: SensorModel
    half_extents: Tuple[float, float, float]
    sensor_height: Optional[float] = None

    def __post_init__(self):
        if self.motion is Motion.GROUND and self.sensor_height is None:
            raise ValueError(f"Ground agent {self.name} needs a sensor height")
        if any(h <= 0 for h in self.half_extents):
            raise ValueError(
                f"Collision half extents {self.half_extents} must be positive"
            )

    @property
    def is_ground(self) -> bool:
        return self.motion is Motion.GROUND

    @property
    def collision_edge(self) -> float:
        return 2 * max(self.half_extents)


def default_uav(rays_h: int = 64, rays_v: int = 48) -> AgentSpec:
    camera = SensorModel(
        SensorKind.FRUSTUM_CAMERA,
        d_max=10.0,
        fov_h=math.pi / 2,
        fov_v=2 * math.pi / 5,
        rays_h=rays_h,
        rays_v=rays_v,
    )
    return AgentSpec("uav", Motion.AERIAL, camera, (0.4, 0.4, 0.4))


def default_ugv(rays_h: int = 360, rays_v: int = 16) -> AgentSpec:
    lidar = SensorModel(
        SensorKind.LIDAR_360,
        d_max=6.0,
        fov_h=2 * math.pi,
        fov_v=math.radians(40),
        rays_h=rays_h,
        rays_v=rays_v,
    )
    return AgentSpec(
        "ugv", Motion.GROUND, lidar, (0.5, 0.5, 0.35), sensor_height=0.75
    )


def simulate_scan(
    world: GroundTruthWorld, sensor: SensorModel, pose: Viewpoint
) -> Scan:
    """
    Cast every sensor ray from `pose` through the ground truth.

    Rays that reach an occupied voxel within `d_max` end just
    inside it with `hit=True`; the others end at `d_max` with
    `hit=False`.
    """
    origin = pose.as_array()
    if world.is_occupied(origin):
        raise ValueError(f"Sensor pose {pose} lies inside an obstacle")

    directions = sensor.directions(pose.yaw)
    res = world.resolution
    start = origin / res
    far = start + directions * (sensor.d_max / res)
    ends, _ = clip_to_grid(start, far, world.shape)
    starts = np.broadcast_to(start, ends.shape)

    hit = np.zeros(len(ends), dtype=bool)
    hit_t = np.ones(len(ends))
    hit_voxel = np.zeros((len(ends), 3), dtype=np.int64)
    occupied = world.occupied
    for _, rays, voxels, entries in traverse_batch(starts, ends):
        now = occupied[voxels[:, 0], voxels[:, 1], voxels[:, 2]]
        now &= ~hit[rays]
        first = rays[now]
        hit[first] = True
        hit_t[first] = entries[now]
        hit_voxel[first] = voxels[now]

    delta = ends - starts
    length = np.linalg.norm(delta, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        nudge = np.where(length > 0, _HIT_NUDGE / length, 0.0)
    t = np.where(hit, np.minimum(hit_t + nudge, 1.0), 1.0)
    points = starts + delta * t[:, None]

    # keep hit endpoints inside the voxel that stopped the ray
    landed = np.floor(points).astype(np.int64)
    stray = hit & np.any(landed != hit_voxel, axis=1)
    points[stray] = hit_voxel[stray] + 0.5
    return Scan(points * res, hit)


def ground_start(
    free: np.ndarray,
    resolution: float,
    agent: AgentSpec,
    origin: Sequence[float] = (0.0, 0.0, 0.0),
) -> Optional[Viewpoint]:
    """
    Viewpoint at the valid cell of a ground agent's sensor layer
    nearest to the grid's (0, 0) corner, or None when the layer
    holds no cell whose collision box is entirely free
    """
    layer = int((agent.sensor_height - origin[2]) // resolution)
    radius = box_radius(resolution, agent.half_extents)
    cells = np.argwhere(box_all(free, radius)[:, :, layer])
    if not len(cells):
        return None
    order = np.lexsort((cells[:, 1], cells[:, 0], cells.sum(axis=1)))
    ix, iy = cells[order[0]]
    x = origin[0] + (ix + 0.5) * resolution
    y = origin[1] + (iy + 0.5) * resolution
    return Viewpoint(float(x), float(y), agent.sensor_height)


def start_poses(
    world: GroundTruthWorld, agents: Sequence[AgentSpec]
) -> Dict[str, Viewpoint]:
    """
    Deterministic collision-free start viewpoints. Ground agents
    start at the valid cell of their sensor layer nearest to the
    world's (0, 0) corner; aerial agents at the center of the
    free coarse block horizontally nearest to the first ground
    start (or to the corner when there is none).
    """
    res = world.resolution
    free = ~world.occupied
    poses, anchor = {}, np.zeros(2)
    for agent in sorted(agents, key=lambda a: not a.is_ground):
        if agent.is_ground:
            pose = ground_start(free, res, agent)
            if pose is None:
                raise ValueError(f"No valid start cell for {agent.name}")
            if not poses:
                anchor = np.array([pose.x, pose.y])
        else:
            factor = coarse_factor(agent.collision_edge, res)
            nx, ny, nz = (n // factor for n in world.shape)
            blocks = free[: nx * factor, : ny * factor, : nz * factor]
            blocks = blocks.reshape(nx, factor, ny, factor, nz, factor)
            cells = np.argwhere(blocks.all(axis=(1, 3, 5)))
            if not len(cells):
                raise ValueError(f"No free start block for {agent.name}")
            centers = (cells + 0.5) * factor * res
            dist = np.linalg.norm(centers[:, :2] - anchor, axis=1)
            order = np.lexsort(
                (cells[:, 1], cells[:, 0], cells[:, 2], np.round(dist, 9))
            )
            pose = Viewpoint(*map(float, centers[order[0]]))
        poses[agent.name] = pose
        logger.debug(f"Start pose for {agent.name}: {pose}")
    return poses
