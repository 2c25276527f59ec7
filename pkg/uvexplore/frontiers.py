import logging
from dataclasses import dataclass
from typing import AbstractSet, FrozenSet, Iterator

import numpy as np

from uvexplore.occupancy import (
    OccupancyMap,
    OccupancyState,
    VoxelKey,
    map_keys,
)

logger = logging.getLogger(__name__)

# face-adjacent neighborhood
OFFSETS = np.array(
    [
        [1, 0, 0],
        [-1, 0, 0],
        [0, 1, 0],
        [0, -1, 0],
        [0, 0, 1],
        [0, 0, -1],
    ]
)


@dataclass(frozen=True)
class FrontierSet:
    """
    Unknown voxels with at least one face-adjacent Free
    neighbor. `examined` counts the voxels whose frontier
    status was evaluated to produce this set.
    """

    keys: FrozenSet[VoxelKey]
    examined: int = 0

    def __len__(self) -> int:
        return len(self.keys)

    def __iter__(self) -> Iterator[VoxelKey]:
        return iter(self.keys)

    def __contains__(self, key) -> bool:
        return key in self.keys

    def as_array(self) -> np.ndarray:
        """Keys as a lexicographically sorted (N, 3) int array"""
        if not self.keys:
            return np.zeros((0, 3), dtype=np.int64)
        return np.array(sorted(self.keys), dtype=np.int64)

    def subset(self, keys: AbstractSet[VoxelKey]) -> "FrontierSet":
        return FrontierSet(frozenset(keys) & self.keys)


def _is_frontier(omap: OccupancyMap, keys: np.ndarray) -> np.ndarray:
    """Vectorized frontier test for an (N, 3) array of in-bounds keys"""
    states = omap.states
    shape = np.array(omap.shape)
    result = states[keys[:, 0], keys[:, 1], keys[:, 2]] == (
        OccupancyState.UNKNOWN
    )
    has_free = np.zeros(len(keys), dtype=bool)
    for offset in OFFSETS:
        neighbors = keys + offset
        inside = np.all((neighbors >= 0) & (neighbors < shape), axis=1)
        n = neighbors[inside]
        has_free[inside] |= (
            states[n[:, 0], n[:, 1], n[:, 2]] == OccupancyState.FREE
        )
    return result & has_free


def batch_frontiers(omap: OccupancyMap) -> FrontierSet:
    """Recompute the frontier set from scratch over the whole map"""
    states = omap.states
    free = states == OccupancyState.FREE
    has_free = np.zeros(omap.shape, dtype=bool)
    has_free[1:] |= free[:-1]
    has_free[:-1] |= free[1:]
    has_free[:, 1:] |= free[:, :-1]
    has_free[:, :-1] |= free[:, 1:]
    has_free[:, :, 1:] |= free[:, :, :-1]
    has_free[:, :, :-1] |= free[:, :, 1:]
    mask = has_free & (states == OccupancyState.UNKNOWN)
    return FrontierSet(frozenset(map_keys(np.argwhere(mask))), omap.size)


def update_frontiers(
    frontiers: FrontierSet,
    omap: OccupancyMap,
    changed: AbstractSet[VoxelKey],
) -> FrontierSet:
    """
    Bring `frontiers` up to date after a scan changed the
    tri-state of the voxels in `changed`. Only those voxels and
    their face neighbors can change frontier status, so only
    they are re-examined.
    """
    if not changed:
        return FrontierSet(frontiers.keys, 0)

    seeds = np.array(list(changed), dtype=np.int64)
    candidates = np.concatenate([seeds] + [seeds + o for o in OFFSETS])
    inside = np.all(
        (candidates >= 0) & (candidates < np.array(omap.shape)), axis=1
    )
    candidates = np.unique(candidates[inside], axis=0)
    is_frontier = _is_frontier(omap, candidates)

    examined = set(map_keys(candidates))
    added = set(map_keys(candidates[is_frontier]))
    keys = (frontiers.keys - examined) | added
    logger.debug(
        f"Frontier update examined {len(candidates)} voxels, "
        f"{len(frontiers)} -> {len(keys)} frontiers"
    )
    return FrontierSet(frozenset(keys), len(candidates))
