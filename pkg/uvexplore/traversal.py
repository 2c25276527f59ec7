"""
Amanatides-Woo voxel traversal in grid units, where voxel
(i, j, k) spans [i, i + 1) x [j, j + 1) x [k, k + 1).

Both routines step one axis at a time until the voxel that
contains the segment's end is reached, so a traversal from
voxel `s` to voxel `e` always visits exactly
sum(|e - s|) + 1 voxels. Ties between axes are broken in
x, y, z order, identically in the scalar and batched code,
which keeps their results bit-for-bit equal.
"""

import math
from typing import Iterator, List, Sequence, Tuple

import numpy as np

Point = Sequence[float]
Voxel = Tuple[int, int, int]


def _axis_setup(i: int, e: int, p0: float, d: float):
    step = 1 if e > i else (-1 if e < i else 0)
    if step == 0:
        return step, math.inf, math.inf
    boundary = i + 1 if step > 0 else i
    return step, (boundary - p0) / d, 1.0 / abs(d)


def traverse(start: Point, end: Point) -> Tuple[List[Voxel], List[float]]:
    """
    Voxels pierced by the segment from `start` to `end`.

    Args:
        start:
            Segment start in grid units
        end:
            Segment end in grid units

    Returns:
        The visited voxels in order, from the voxel containing
        `start` to the voxel containing `end`, and for each of
        them the segment parameter in [0, 1] at which it is
        entered (0 for the first voxel).
    """
    x0, y0, z0 = (float(c) for c in start)
    x1, y1, z1 = (float(c) for c in end)
    ix, iy, iz = math.floor(x0), math.floor(y0), math.floor(z0)
    ex, ey, ez = math.floor(x1), math.floor(y1), math.floor(z1)

    sx, tx, dtx = _axis_setup(ix, ex, x0, x1 - x0)
    sy, ty, dty = _axis_setup(iy, ey, y0, y1 - y0)
    sz, tz, dtz = _axis_setup(iz, ez, z0, z1 - z0)
    nx, ny, nz = abs(ex - ix), abs(ey - iy), abs(ez - iz)

    voxels, entries = [(ix, iy, iz)], [0.0]
    for _ in range(nx + ny + nz):
        if tx <= ty and tx <= tz:
            ix += sx
            t = tx
            nx -= 1
            tx = tx + dtx if nx else math.inf
        elif ty <= tz:
            iy += sy
            t = ty
            ny -= 1
            ty = ty + dty if ny else math.inf
        else:
            iz += sz
            t = tz
            nz -= 1
            tz = tz + dtz if nz else math.inf
        voxels.append((ix, iy, iz))
        entries.append(t)
    return voxels, entries


def traverse_batch(
    starts: np.ndarray, ends: np.ndarray
) -> Iterator[Tuple[int, np.ndarray, np.ndarray, np.ndarray]]:
    """
    Batched version of `traverse` over N segments.

    Yields one tuple per traversal step `k`, starting at 0:
    `(k, rays, voxels, entries)` where `rays` indexes the
    segments still being traversed at that step, `voxels`
    is the (len(rays), 3) array of voxels they visit and
    `entries` the segment parameters at which those voxels
    are entered. Segment `n` finishes after
    `lengths(starts, ends)[n]` steps.
    """
    starts = np.asarray(starts, dtype=np.float64).reshape(-1, 3)
    ends = np.asarray(ends, dtype=np.float64).reshape(-1, 3)
    voxel = np.floor(starts).astype(np.int64)
    last = np.floor(ends).astype(np.int64)
    step = np.sign(last - voxel)
    remaining = np.abs(last - voxel)
    total = remaining.sum(axis=1)

    delta = ends - starts
    moving = step != 0
    boundary = np.where(step > 0, voxel + 1, voxel).astype(np.float64)
    t_max = np.full(delta.shape, np.inf)
    t_delta = np.full(delta.shape, np.inf)
    np.divide(boundary - starts, delta, out=t_max, where=moving)
    np.divide(1.0, np.abs(delta), out=t_delta, where=moving)

    rays = np.arange(len(starts))
    yield 0, rays, voxel.copy(), np.zeros(len(starts))

    for k in range(1, int(total.max(initial=0)) + 1):
        rays = np.flatnonzero(total >= k)
        tm = t_max[rays]
        take_x = (tm[:, 0] <= tm[:, 1]) & (tm[:, 0] <= tm[:, 2])
        take_y = ~take_x & (tm[:, 1] <= tm[:, 2])
        axis = np.where(take_x, 0, np.where(take_y, 1, 2))

        entries = tm[np.arange(len(rays)), axis]
        voxel[rays, axis] += step[rays, axis]
        remaining[rays, axis] -= 1
        advanced = entries + t_delta[rays, axis]
        exhausted = remaining[rays, axis] == 0
        t_max[rays, axis] = np.where(exhausted, np.inf, advanced)
        yield k, rays, voxel[rays].copy(), entries


def lengths(starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Number of steps `traverse_batch` takes for each segment"""
    starts = np.floor(np.asarray(starts, dtype=np.float64).reshape(-1, 3))
    ends = np.floor(np.asarray(ends, dtype=np.float64).reshape(-1, 3))
    return np.abs(ends - starts).sum(axis=1).astype(np.int64)
