import logging
import math
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import (
    BinaryIO,
    FrozenSet,
    Iterable,
    Iterator,
    NamedTuple,
    Sequence,
    Set,
    Tuple,
    Union,
)

import numpy as np
from scipy import ndimage

from uvexplore import voxw
from uvexplore.traversal import lengths, traverse, traverse_batch

logger = logging.getLogger(__name__)

# slack used when converting extents to voxel counts and
# when keeping clipped points strictly inside the grid
_EPS = 1e-9


class OutOfBoundsError(ValueError):
    pass


class VoxelKey(NamedTuple):
    ix: int
    iy: int
    iz: int


class OccupancyState(IntEnum):
    """Tri-state voxel classification, valued as in map exports"""

    FREE = 0
    OCCUPIED = 1
    UNKNOWN = 2


ChangedVoxelSet = FrozenSet[VoxelKey]


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in meters"""

    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]

    def __post_init__(self):
        object.__setattr__(self, "lo", tuple(map(float, self.lo)))
        object.__setattr__(self, "hi", tuple(map(float, self.hi)))

    @classmethod
    def from_extent(cls, extent: Sequence[float]) -> "Box":
        return cls((0.0, 0.0, 0.0), tuple(extent))

    @property
    def extent(self) -> Tuple[float, float, float]:
        return tuple(h - lo for lo, h in zip(self.lo, self.hi))


@dataclass(frozen=True)
class LogOddsModel:
    hit: float = 0.85
    miss: float = -0.4
    clamp_min: float = -3.5
    clamp_max: float = 3.5
    occupied_threshold: float = 0.0


class Scan:
    """
    A range scan as parallel arrays of ray endpoints (meters)
    and hit flags. Iterating yields `(endpoint, hit)` pairs.
    """

    def __init__(self, endpoints: np.ndarray, hits: np.ndarray):
        self.endpoints = np.asarray(endpoints, dtype=np.float64).reshape(
            -1, 3
        )
        self.hits = np.asarray(hits, dtype=bool).reshape(-1)
        if len(self.endpoints) != len(self.hits):
            raise ValueError(
                f"Scan has {len(self.endpoints)} endpoints "
                f"but {len(self.hits)} hit flags"
            )

    @classmethod
    def from_pairs(
        cls, pairs: Iterable[Tuple[Sequence[float], bool]]
    ) -> "Scan":
        pairs = list(pairs)
        if not pairs:
            return cls(np.zeros((0, 3)), np.zeros(0, dtype=bool))
        endpoints, hits = zip(*pairs)
        return cls(np.array(endpoints), np.array(hits))

    def __len__(self) -> int:
        return len(self.hits)

    def __iter__(self) -> Iterator[Tuple[np.ndarray, bool]]:
        for endpoint, hit in zip(self.endpoints, self.hits):
            yield endpoint, bool(hit)


class OccupancyMap:
    """
    Bounded voxel grid of log-odds occupancy values over
    `bounds`, with edge length `resolution`. Voxels that have
    never received a measurement are Unknown regardless of
    their log-odds value.
    """

    def __init__(
        self,
        bounds: Box,
        resolution: float,
        model: LogOddsModel = LogOddsModel(),
    ):
        if not resolution > 0:
            raise ValueError(f"Resolution must be positive, got {resolution}")
        extent = np.array(bounds.extent)
        if np.any(extent < resolution - _EPS):
            raise ValueError(
                f"Bounds extent {tuple(extent)} is smaller than "
                f"one voxel of size {resolution}"
            )
        self.bounds = bounds
        self.resolution = float(resolution)
        self.model = model
        self.shape = tuple(
            int(math.ceil(e / resolution - _EPS)) for e in extent
        )
        self.log_odds = np.zeros(self.shape, dtype=np.float64)
        self.observed = np.zeros(self.shape, dtype=bool)
        self._states = None
        self._free = None

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def origin(self) -> np.ndarray:
        return np.array(self.bounds.lo)

    @property
    def states(self) -> np.ndarray:
        """Cached (nx, ny, nz) uint8 array of `OccupancyState` values"""
        if self._states is None:
            occupied = self.log_odds > self.model.occupied_threshold
            states = np.where(
                occupied, OccupancyState.OCCUPIED, OccupancyState.FREE
            ).astype(np.uint8)
            states[~self.observed] = OccupancyState.UNKNOWN
            self._states = states
        return self._states

    @property
    def free(self) -> np.ndarray:
        """Cached boolean mask of the Free voxels"""
        if self._free is None:
            self._free = self.states == OccupancyState.FREE
        return self._free

    def copy(self) -> "OccupancyMap":
        other = OccupancyMap(self.bounds, self.resolution, self.model)
        other.log_odds = self.log_odds.copy()
        other.observed = self.observed.copy()
        return other

    def to_grid(self, points: np.ndarray) -> np.ndarray:
        """Convert points in meters to continuous grid units"""
        points = np.asarray(points, dtype=np.float64)
        return (points - self.origin) / self.resolution

    def center(self, keys: np.ndarray) -> np.ndarray:
        """Centers in meters of the voxels indexed by `keys`"""
        keys = np.asarray(keys, dtype=np.float64)
        return self.origin + (keys + 0.5) * self.resolution

    def contains_key(self, key: Sequence[int]) -> bool:
        return all(0 <= i < n for i, n in zip(key, self.shape))

    def contains_point(self, point: Sequence[float]) -> bool:
        return all(
            lo <= p < hi
            for p, lo, hi in zip(point, self.bounds.lo, self.bounds.hi)
        )

    def key(self, point: Sequence[float]) -> VoxelKey:
        """Key of the voxel containing `point`"""
        if not self.contains_point(point):
            raise OutOfBoundsError(f"Point {tuple(point)} outside map bounds")
        grid = np.floor(self.to_grid(point)).astype(int)
        grid = np.minimum(grid, np.array(self.shape) - 1)
        return VoxelKey(*map(int, grid))

    def box_range(
        self, center: Sequence[float], half_extents: Sequence[float]
    ) -> Tuple[np.ndarray, np.ndarray]:
        """
        Inclusive voxel index range of every voxel whose interior
        intersects the axis-aligned box around `center`. The
        range is not clipped to the grid.
        """
        c = self.to_grid(center)
        h = np.asarray(half_extents, dtype=np.float64) / self.resolution
        lo = np.floor(c - h + _EPS).astype(int)
        hi = np.ceil(c + h - _EPS).astype(int) - 1
        return lo, hi

    def _apply(self, flat: np.ndarray, increment: float) -> None:
        values = self.log_odds.reshape(-1)
        values[flat] = np.clip(
            values[flat] + increment,
            self.model.clamp_min,
            self.model.clamp_max,
        )
        self.observed.reshape(-1)[flat] = True

    def _update(self, misses: np.ndarray, hits: np.ndarray) -> ChangedVoxelSet:
        touched = np.union1d(misses, hits)
        before = self.states.reshape(-1)[touched].copy()
        self._apply(misses, self.model.miss)
        self._apply(hits, self.model.hit)
        self._states = None
        self._free = None
        after = self.states.reshape(-1)[touched]
        changed = touched[before != after]
        keys = np.stack(np.unravel_index(changed, self.shape), axis=1)
        return frozenset(map(VoxelKey._make, keys.tolist()))


def new_map(bounds: Box, resolution: float) -> OccupancyMap:
    """Create a map of all-Unknown voxels covering `bounds`"""
    return OccupancyMap(bounds, resolution)


def clip_to_grid(
    origin: np.ndarray, ends: np.ndarray, shape: Sequence[int]
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Truncate segments from `origin` (grid units, inside the grid)
    at the grid boundary. Returns the new ends and a mask of the
    segments that were truncated.
    """
    upper = np.array(shape, dtype=np.float64) - _EPS
    delta = ends - origin
    t_exit = np.ones(len(ends))
    with np.errstate(divide="ignore", invalid="ignore"):
        for axis in range(3):
            d = delta[:, axis]
            t_hi = np.where(d > 0, (upper[axis] - origin[axis]) / d, np.inf)
            t_lo = np.where(d < 0, (0.0 - origin[axis]) / d, np.inf)
            t_exit = np.minimum(t_exit, np.minimum(t_hi, t_lo))
    clipped = t_exit < 1.0
    ends = origin + delta * t_exit[:, None]
    ends = np.clip(ends, 0.0, upper)
    return ends, clipped


def integrate_scan(
    omap: OccupancyMap,
    origin: Sequence[float],
    scan: Union[Scan, Iterable[Tuple[Sequence[float], bool]]],
) -> ChangedVoxelSet:
    """
    Integrate one range scan taken from `origin`.

    Every voxel a ray traverses gets one miss update, and the
    endpoint voxel of each hit ray gets one hit update. Each
    voxel is updated at most once per kind per scan, misses
    first, so the result does not depend on ray order. Rays
    leaving the map are truncated at its boundary and lose
    their hit.

    Returns:
        The keys of the voxels whose tri-state changed
    """
    if not isinstance(scan, Scan):
        scan = Scan.from_pairs(scan)
    if not omap.contains_point(origin):
        raise OutOfBoundsError(f"Scan origin {tuple(origin)} outside map")
    if not len(scan):
        return frozenset()

    o = omap.to_grid(origin)
    ends, clipped = clip_to_grid(o, omap.to_grid(scan.endpoints), omap.shape)
    hits = scan.hits & ~clipped
    starts = np.broadcast_to(o, ends.shape)
    n = lengths(starts, ends)

    misses = []
    for k, rays, voxels, _ in traverse_batch(starts, ends):
        keep = ~(hits[rays] & (n[rays] == k))
        misses.append(voxels[keep])
    misses = np.concatenate(misses)
    hit_voxels = np.floor(ends[hits]).astype(np.int64)

    flat_misses = np.unique(np.ravel_multi_index(misses.T, omap.shape))
    flat_hits = np.unique(np.ravel_multi_index(hit_voxels.T, omap.shape))
    changed = omap._update(flat_misses, flat_hits)
    logger.debug(
        f"Integrated {len(scan)} rays: {len(flat_misses)} misses, "
        f"{len(flat_hits)} hits, {len(changed)} voxels changed state"
    )
    return changed


def mark_free_box(
    omap: OccupancyMap,
    center: Sequence[float],
    half_extents: Sequence[float],
) -> ChangedVoxelSet:
    """
    Apply one miss update to every in-bounds voxel overlapped by
    the box around `center`, i.e. the volume an agent occupies.
    """
    lo, hi = omap.box_range(center, half_extents)
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.array(omap.shape) - 1)
    if np.any(hi < lo):
        return frozenset()
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    flat = np.ravel_multi_index(grid.reshape(-1, 3).T, omap.shape)
    return omap._update(flat, np.zeros(0, dtype=np.int64))


def state(omap: OccupancyMap, key: Sequence[int]) -> OccupancyState:
    if not omap.contains_key(key):
        raise OutOfBoundsError(f"Voxel key {tuple(key)} outside map")
    return OccupancyState(int(omap.states[tuple(key)]))


def _check_inside(omap: OccupancyMap, *points: Sequence[float]) -> None:
    for p in points:
        if not omap.contains_point(p):
            raise OutOfBoundsError(f"Ray endpoint {tuple(p)} outside map")


def ray_cast(
    omap: OccupancyMap, start: Sequence[float], end: Sequence[float]
) -> bool:
    """
    True if no voxel strictly between the voxels containing
    `start` and `end` is Occupied or Unknown. The segment is
    always traversed from its lexicographically smaller end
    so that the result is symmetric in its arguments.
    """
    _check_inside(omap, start, end)
    start = tuple(float(c) for c in start)
    end = tuple(float(c) for c in end)
    if start > end:
        start, end = end, start
    voxels, _ = traverse(omap.to_grid(start), omap.to_grid(end))
    free = omap.free
    return all(free[v] for v in voxels[1:-1])


def _lex_greater(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    gt = a[:, 2] > b[:, 2]
    gt = (a[:, 1] > b[:, 1]) | ((a[:, 1] == b[:, 1]) & gt)
    return (a[:, 0] > b[:, 0]) | ((a[:, 0] == b[:, 0]) & gt)


def ray_cast_many(
    omap: OccupancyMap,
    starts: np.ndarray,
    ends: np.ndarray,
) -> np.ndarray:
    """
    Batched `ray_cast`. `starts` may be a single point, which
    is then shared by every segment.

    Returns:
        Boolean array, one entry per segment, equal to what
        `ray_cast` returns for the same pair
    """
    ends = np.array(ends, dtype=np.float64).reshape(-1, 3)
    starts = np.broadcast_to(
        np.asarray(starts, dtype=np.float64), ends.shape
    ).copy()
    if not len(ends):
        return np.zeros(0, dtype=bool)
    lo, hi = np.array(omap.bounds.lo), np.array(omap.bounds.hi)
    for points in (starts, ends):
        if np.any(points < lo) or np.any(points >= hi):
            raise OutOfBoundsError("Ray endpoint outside map bounds")

    swap = _lex_greater(starts, ends)
    starts[swap], ends[swap] = ends[swap], starts[swap].copy()
    starts, ends = omap.to_grid(starts), omap.to_grid(ends)
    n = lengths(starts, ends)

    free = omap.free
    blocked = np.zeros(len(ends), dtype=bool)
    for k, rays, voxels, _ in traverse_batch(starts, ends):
        interior = (k > 0) & (k < n[rays])
        if not np.any(interior):
            continue
        v = voxels[interior]
        blocked[rays[interior]] |= ~free[v[:, 0], v[:, 1], v[:, 2]]
    return ~blocked


def coarse_free_grid(omap: OccupancyMap, factor: int) -> np.ndarray:
    """
    Boolean grid over aligned factor^3 blocks, True where every
    base voxel of the block is Free. Blocks cut by the map
    boundary are never free.
    """
    if factor < 1 or factor & (factor - 1):
        raise ValueError(f"Factor must be a power of two, got {factor}")
    nx, ny, nz = (n // factor for n in omap.shape)
    free = omap.free[: nx * factor, : ny * factor, : nz * factor]
    blocks = free.reshape(nx, factor, ny, factor, nz, factor)
    return blocks.all(axis=(1, 3, 5))


def coarse_free_voxels(omap: OccupancyMap, factor: int) -> Set[VoxelKey]:
    """Keys (at the coarse level) of all fully-Free aligned blocks"""
    grid = coarse_free_grid(omap, factor)
    return set(map_keys(np.argwhere(grid)))


def map_keys(indices: np.ndarray) -> Iterator[VoxelKey]:
    return map(VoxelKey._make, np.asarray(indices).tolist())


def state_grid(omap: OccupancyMap) -> np.ndarray:
    """Dense copy of the tri-state grid, valued as `OccupancyState`"""
    return omap.states.copy()


def coverage_stats(omap: OccupancyMap) -> Tuple[float, float, float]:
    """Fractions of Free, Occupied and Unknown voxels"""
    counts = np.bincount(omap.states.reshape(-1), minlength=3)
    free, occupied, unknown = counts[:3] / omap.size
    return float(free), float(occupied), float(unknown)


def dump_map(omap: OccupancyMap, f: BinaryIO) -> None:
    voxw.dump(omap.states, omap.resolution, f)


def save_map(omap: OccupancyMap, path: Union[str, Path]) -> None:
    with open(path, "wb") as f:
        dump_map(omap, f)


def load_map(path: Union[str, Path]) -> OccupancyMap:
    """
    Rebuild a map from a tri-state export. Free and Occupied
    voxels get the clamp log-odds of their class.
    """
    with open(path, "rb") as f:
        return read_map(f)


def read_map(f: BinaryIO) -> OccupancyMap:
    grid, resolution = voxw.load(f)
    return from_states(grid, resolution)


def from_states(grid: np.ndarray, resolution: float) -> OccupancyMap:
    extent = tuple(n * resolution for n in grid.shape)
    m = OccupancyMap(Box.from_extent(extent), resolution)
    if m.shape != grid.shape:
        raise ValueError(
            f"State grid shape {grid.shape} inconsistent with {m.shape}"
        )
    m.observed = grid != OccupancyState.UNKNOWN
    m.log_odds = np.where(
        grid == OccupancyState.OCCUPIED,
        m.model.clamp_max,
        np.where(grid == OccupancyState.FREE, m.model.clamp_min, 0.0),
    )
    return m


def box_radius(
    resolution: float, half_extents: Sequence[float]
) -> Tuple[int, int, int]:
    """
    Per-axis voxel radius of a box with `half_extents` centered on
    a voxel center, i.e. the box overlaps voxels `i - r .. i + r`.
    """
    h = np.asarray(half_extents, dtype=np.float64) / resolution
    return tuple(int(r) for r in np.ceil(0.5 + h - _EPS).astype(int) - 1)


def box_all(mask: np.ndarray, radius: Sequence[int]) -> np.ndarray:
    """
    True where the (2r + 1) box around a voxel lies inside the
    grid and is True everywhere in `mask`
    """
    size = tuple(2 * r + 1 for r in radius)
    return ndimage.minimum_filter(
        mask.astype(np.uint8), size=size, mode="constant", cval=0
    ).astype(bool)


def coarse_factor(edge: float, resolution: float) -> int:
    """Smallest power of two whose block edge is at least `edge`"""
    factor = 1
    while factor * resolution < edge - _EPS:
        factor *= 2
    return factor
