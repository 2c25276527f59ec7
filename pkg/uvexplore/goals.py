"""
Goal selection for both agents. The ground agent's goal comes
from a Monte-Carlo rendering of view quality over its corridor,
the aerial agent's from the best cluster of its frontiers.
"""

import csv
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import (
    AbstractSet,
    Dict,
    FrozenSet,
    List,
    Optional,
    TextIO,
    Tuple,
    Union,
)

import numpy as np

from uvexplore.corridor import (
    WITNESS_BATCH,
    Corridor,
    distribute_frontiers,
    feasible_mask,
    ugv_corridor,
)
from uvexplore.frontiers import FrontierSet, batch_frontiers
from uvexplore.occupancy import (
    OccupancyMap,
    VoxelKey,
    map_keys,
    ray_cast_many,
)
from uvexplore.sensors import AgentSpec, ground_start
from uvexplore.viewpoint import Viewpoint

logger = logging.getLogger(__name__)

# rejection sampling gives up after this many draws per kept sample
ATTEMPTS_PER_SAMPLE = 20


@dataclass(frozen=True)
class ViewQualityImage:
    """
    Sampled information gain `ig` of every corridor cell, along
    with the number of frontier samples `kept` inside the cell's
    feasible region. `0 <= ig <= kept <= n_r` per cell.
    """

    corridor: Corridor
    ig: np.ndarray
    kept: np.ndarray
    n_r: int
    rng_seed: int

    def __len__(self) -> int:
        return len(self.ig)

    @property
    def centers(self) -> np.ndarray:
        return self.corridor.centers

    @property
    def keys(self) -> np.ndarray:
        return self.corridor.keys

    def as_dict(self) -> Dict[VoxelKey, int]:
        return dict(zip(map_keys(self.keys), self.ig.tolist()))


@dataclass(frozen=True)
class ClusterInfo:
    block: VoxelKey
    center: Tuple[float, float, float]
    members: FrozenSet[VoxelKey]

    @property
    def count(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class UavGoal:
    """Aerial goal viewpoint and the frontier it was chosen to see"""

    viewpoint: Viewpoint
    target: VoxelKey
    cluster: VoxelKey


def _sample(
    rng: np.random.Generator, population: int, feasible, n_r: int
) -> np.ndarray:
    """
    Draw uniformly with replacement from `population` frontiers,
    rejecting draws outside the feasible region and repeats of
    an already kept frontier, until `n_r` are kept or the
    attempt budget runs out
    """
    draws = rng.integers(population, size=ATTEMPTS_PER_SAMPLE * n_r)
    draws = draws[feasible(draws)]
    _, first = np.unique(draws, return_index=True)
    return draws[np.sort(first)[:n_r]]


def _render_cell(
    omap: OccupancyMap,
    corridor: Corridor,
    points: np.ndarray,
    index: int,
    n_r: int,
    seed: int,
) -> Tuple[int, int]:
    center = corridor.centers[index]

    def feasible(idx):
        return feasible_mask(corridor.agent, points[idx], center)

    if n_r >= len(points):
        kept = np.flatnonzero(feasible(np.arange(len(points))))
    else:
        rng = np.random.default_rng([seed, *corridor.keys[index].tolist()])
        kept = _sample(rng, len(points), feasible, n_r)
    if not len(kept):
        return 0, 0
    visible = ray_cast_many(omap, center, points[kept])
    return int(visible.sum()), len(kept)


def render_view_quality(
    corridor: Corridor,
    frontiers: FrontierSet,
    omap: OccupancyMap,
    n_r: int = 50,
    seed: int = 0,
    threads: int = 1,
) -> ViewQualityImage:
    """
    Estimate, for every corridor cell, how many frontiers a
    sensor placed there would see. Frontiers act as light
    sources: candidates are drawn uniformly from `frontiers`,
    kept when they fall in the cell's feasible region, and
    counted when a ray to them passes only Free voxels.

    When `n_r` covers the whole frontier set, every frontier
    is evaluated instead of sampled. Each cell draws from its
    own stream seeded by `seed` and its key, so the image does
    not depend on `threads`.
    """
    if n_r < 1:
        raise ValueError(f"Samples per cell must be positive, got {n_r}")
    n = len(corridor)
    ig = np.zeros(n, dtype=np.int64)
    kept = np.zeros(n, dtype=np.int64)
    if not len(frontiers) or not n:
        return ViewQualityImage(corridor, ig, kept, n_r, seed)

    points = omap.center(frontiers.as_array())

    def render(i):
        return _render_cell(omap, corridor, points, i, n_r, seed)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(render, range(n)))
    else:
        results = [render(i) for i in range(n)]
    for i, (g, k) in enumerate(results):
        ig[i], kept[i] = g, k
    logger.debug(
        f"Rendered view quality over {n} cells from {len(frontiers)} "
        f"frontiers, max IG {ig.max()}"
    )
    return ViewQualityImage(corridor, ig, kept, n_r, seed)


def _argmax(
    quality: np.ndarray, dist: np.ndarray, keys: np.ndarray
) -> Optional[int]:
    """Best quality, then nearest, then lexicographically smallest key"""
    if not len(quality) or quality.max() <= 0:
        return None
    order = np.lexsort((keys[:, 2], keys[:, 1], keys[:, 0], dist, -quality))
    return int(order[0])


def select_ugv_goal(
    image: ViewQualityImage,
    q0: Viewpoint,
    lam: float = 0.05,
    exclude: AbstractSet[VoxelKey] = frozenset(),
) -> Optional[Viewpoint]:
    """
    Corridor cell maximizing exp(-lam * |q - q0|) * IG(q), or
    None when no cell outside `exclude` has a positive IG
    """
    if lam < 0:
        raise ValueError(f"Distance penalty must be non-negative, got {lam}")
    centers = image.centers
    dist = np.linalg.norm(centers - q0.as_array(), axis=1)
    quality = np.exp(-lam * dist) * image.ig
    if exclude:
        skip = [tuple(k) in exclude for k in image.keys.tolist()]
        quality = np.where(skip, 0.0, quality)

    best = _argmax(quality, dist, image.keys)
    if best is None:
        return None
    x, y, z = map(float, centers[best])
    goal = q0.facing((x, y, z))
    return Viewpoint(x, y, z, goal.yaw)


def cluster_frontiers(
    frontiers: FrontierSet, omap: OccupancyMap, cluster_factor: int = 8
) -> List[ClusterInfo]:
    """
    Group frontiers by the aligned `cluster_factor`^3 block that
    contains them. Clusters are returned in block order.
    """
    if cluster_factor < 2 or cluster_factor & (cluster_factor - 1):
        raise ValueError(
            f"Cluster factor must be a power of two >= 2, "
            f"got {cluster_factor}"
        )
    groups: Dict[VoxelKey, List[VoxelKey]] = {}
    for key in sorted(frontiers.keys):
        block = VoxelKey(*(i // cluster_factor for i in key))
        groups.setdefault(block, []).append(key)

    clusters = []
    for block in sorted(groups):
        members = groups[block]
        center = omap.center(np.array(members)).mean(axis=0)
        clusters.append(
            ClusterInfo(block, tuple(map(float, center)), frozenset(members))
        )
    return clusters


def _viewpoint_for(
    omap: OccupancyMap,
    corridor: Corridor,
    target: np.ndarray,
    exclude: AbstractSet[VoxelKey],
) -> Optional[np.ndarray]:
    """Nearest corridor cell that sees `target` from its feasible region"""
    feasible = feasible_mask(corridor.agent, target, corridor.centers)
    if exclude:
        feasible &= np.array(
            [tuple(k) not in exclude for k in corridor.keys.tolist()]
        )
    cells = np.flatnonzero(feasible)
    if not len(cells):
        return None
    dist = np.linalg.norm(corridor.centers[cells] - target, axis=1)
    cells = cells[np.lexsort((cells, dist))]
    for i in range(0, len(cells), WITNESS_BATCH):
        batch = corridor.centers[cells[i : i + WITNESS_BATCH]]
        visible = ray_cast_many(omap, target, batch)
        if visible.any():
            return batch[int(np.argmax(visible))]
    return None


def select_uav_goal(
    clusters: List[ClusterInfo],
    frontiers: FrontierSet,
    corridor: Corridor,
    omap: OccupancyMap,
    q0: Viewpoint,
    lam: float = 0.05,
    exclude_clusters: AbstractSet[VoxelKey] = frozenset(),
    exclude_cells: AbstractSet[VoxelKey] = frozenset(),
) -> Optional[UavGoal]:
    """
    Pick the cluster maximizing exp(-lam * |center - q0|) * count,
    then the member frontier nearest to its center that some
    corridor cell can see. Cluster centers are often not free,
    so the goal is placed at the nearest such corridor cell,
    facing the frontier. Falls through to farther members and
    then to lower ranked clusters; None when nothing is visible.
    """
    if lam < 0:
        raise ValueError(f"Distance penalty must be non-negative, got {lam}")
    if not len(corridor):
        return None
    candidates = [c for c in clusters if c.block not in exclude_clusters]
    if not candidates:
        return None

    position = q0.as_array()
    scores = [
        math.exp(-lam * np.linalg.norm(np.array(c.center) - position))
        * c.count
        for c in candidates
    ]
    ranked = sorted(
        range(len(candidates)), key=lambda i: (-scores[i], candidates[i].block)
    )
    for i in ranked:
        cluster = candidates[i]
        members = sorted(m for m in cluster.members if m in frontiers)
        if not members:
            continue
        points = omap.center(np.array(members))
        dist = np.linalg.norm(points - np.array(cluster.center), axis=1)
        for j in np.argsort(dist, kind="stable"):
            cell = _viewpoint_for(omap, corridor, points[j], exclude_cells)
            if cell is None:
                continue
            x, y, z = map(float, cell)
            viewpoint = Viewpoint(x, y, z).facing(points[j])
            logger.debug(
                f"Aerial goal {viewpoint} for frontier {members[j]} "
                f"in cluster {cluster.block}"
            )
            return UavGoal(viewpoint, members[j], cluster.block)
    return None


def write_view_quality(image: ViewQualityImage, f: TextIO) -> None:
    writer = csv.writer(f, lineterminator="\n")
    writer.writerow(["x", "y", "z", "ig"])
    for (x, y, z), ig in zip(image.centers.tolist(), image.ig.tolist()):
        writer.writerow([f"{x:.6f}", f"{y:.6f}", f"{z:.6f}", ig])


def export_view_quality(
    image: ViewQualityImage, path: Union[str, Path]
) -> None:
    """Write the image as CSV rows of cell center and IG"""
    with open(path, "w", newline="") as f:
        write_view_quality(image, f)


def render_map(
    omap: OccupancyMap,
    agent: AgentSpec,
    n_r: int = 50,
    seed: int = 0,
    threads: int = 1,
    start: Optional[Viewpoint] = None,
) -> Optional[ViewQualityImage]:
    """
    View quality image of a stored map for the ground `agent`
    standing at `start` (by default the valid cell nearest to
    the map corner), over the frontiers assigned to it. None
    when the agent has nowhere to stand.
    """
    if start is None:
        start = ground_start(omap.free, omap.resolution, agent, omap.origin)
    if start is None:
        return None
    corridor = ugv_corridor(omap, agent, start)
    split = distribute_frontiers(
        batch_frontiers(omap), corridor, None, omap, threads
    )
    return render_view_quality(corridor, split.ugv, omap, n_r, seed, threads)
