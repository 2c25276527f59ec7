"""
Procedural ground truth worlds. Every generator is fully
determined by its seed and returns a closed world: the outer
shell, floor and ceiling are occupied so every sensor ray
terminates.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Callable, Dict, List, Tuple, Union

import numpy as np

from uvexplore import voxw
from uvexplore.occupancy import Box, OutOfBoundsError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GroundTruthWorld:
    """Immutable boolean occupancy grid whose origin sits at (0, 0, 0)"""

    occupied: np.ndarray
    resolution: float

    def __post_init__(self):
        occupied = np.array(self.occupied, dtype=bool)
        occupied.setflags(write=False)
        object.__setattr__(self, "occupied", occupied)

    @property
    def shape(self) -> Tuple[int, int, int]:
        return self.occupied.shape

    @property
    def bounds(self) -> Box:
        return Box.from_extent([n * self.resolution for n in self.shape])

    def key(self, point) -> Tuple[int, int, int]:
        idx = np.floor(np.asarray(point) / self.resolution).astype(int)
        if np.any(idx < 0) or np.any(idx >= np.array(self.shape)):
            raise OutOfBoundsError(f"Point {tuple(point)} outside world")
        return tuple(int(i) for i in idx)

    def is_occupied(self, point) -> bool:
        return bool(self.occupied[self.key(point)])


def _close(occupied: np.ndarray) -> np.ndarray:
    occupied[[0, -1], :, :] = True
    occupied[:, [0, -1], :] = True
    occupied[:, :, [0, -1]] = True
    return occupied


def _voxels(length: float, resolution: float) -> int:
    return max(1, int(round(length / resolution)))


def _spanning_tree(
    rng: np.random.Generator,
    cells: List[Tuple[int, int]],
    start: Tuple[int, int],
) -> List[Tuple[Tuple[int, int], Tuple[int, int]]]:
    """Randomized depth-first spanning tree over 4-connected `cells`"""
    remaining = set(cells)
    remaining.discard(start)
    stack, edges = [start], []
    while stack:
        i, j = stack[-1]
        options = [
            (i + di, j + dj)
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1))
            if (i + di, j + dj) in remaining
        ]
        if not options:
            stack.pop()
            continue
        nxt = options[int(rng.integers(len(options)))]
        remaining.discard(nxt)
        edges.append(((i, j), nxt))
        stack.append(nxt)
    return edges


def generate_maze(
    seed: int,
    cells_x: int = 8,
    cells_y: int = 8,
    wall_height: float = 2.1,
    resolution: float = 0.3,
    passage_width: float = 1.8,
    headroom: float = 2.4,
) -> GroundTruthWorld:
    """
    Perfect maze of `cells_x` x `cells_y` cells with one
    voxel thick walls of height `wall_height`.

    One cell other than the start cell (0, 0) is left out of
    the maze and walled in on all four sides. It holds a crate,
    so its floor and the crate can only be observed from above
    the walls. `headroom` meters of free space separate the
    wall tops from the ceiling.
    """
    if cells_x < 2 or cells_y < 2:
        raise ValueError(
            f"Maze needs at least 2x2 cells, got {cells_x}x{cells_y}"
        )
    if wall_height < resolution or passage_width < resolution:
        raise ValueError(
            f"Wall height {wall_height} and passage width "
            f"{passage_width} must both span at least one voxel"
        )

    rng = np.random.default_rng(seed)
    p = _voxels(passage_width, resolution)
    hw = _voxels(wall_height, resolution)
    pitch = p + 1
    shape = (
        cells_x * pitch + 1,
        cells_y * pitch + 1,
        hw + _voxels(headroom, resolution) + 2,
    )
    occupied = np.zeros(shape, dtype=bool)
    walls = slice(1, hw + 1)
    for i in range(cells_x + 1):
        occupied[i * pitch, :, walls] = True
    for j in range(cells_y + 1):
        occupied[:, j * pitch, walls] = True

    cells = [(i, j) for i in range(cells_x) for j in range(cells_y)]
    pen = cells[1 + int(rng.integers(len(cells) - 1))]
    cells.remove(pen)

    for (i, j), (k, m) in _spanning_tree(rng, cells, (0, 0)):
        if i != k:
            x = max(i, k) * pitch
            occupied[x, 1 + j * pitch : (j + 1) * pitch, walls] = False
        else:
            y = max(j, m) * pitch
            occupied[1 + i * pitch : (i + 1) * pitch, y, walls] = False

    # crate in the middle of the walled-in cell
    size = max(1, p // 2)
    x0 = pen[0] * pitch + 1 + (p - size) // 2
    y0 = pen[1] * pitch + 1 + (p - size) // 2
    occupied[x0 : x0 + size, y0 : y0 + size, 1 : 1 + max(1, hw // 2)] = True

    logger.debug(f"Generated {cells_x}x{cells_y} maze {shape}, pen at {pen}")
    return GroundTruthWorld(_close(occupied), resolution)


def generate_warehouse(
    seed: int,
    size: Tuple[float, float] = (16.8, 13.5),
    height: float = 5.4,
    resolution: float = 0.3,
    shelf_height: float = 2.4,
    aisle_width: float = 2.1,
) -> GroundTruthWorld:
    """
    Hall with rows of shelves running along x. Each row is cut by
    one or two gaps at random positions, and a free margin of one
    aisle width runs around the rows.
    """
    nx, ny = (_voxels(s, resolution) for s in size)
    nz = _voxels(height, resolution)
    aisle = _voxels(aisle_width, resolution)
    shelf = _voxels(shelf_height, resolution)
    if nx < 2 * aisle + 4 or ny < 2 * aisle + 4 or nz < shelf + 3:
        raise ValueError(
            f"Warehouse of size {size} x {height} m is too small for "
            f"{aisle_width} m aisles and {shelf_height} m shelves"
        )

    rng = np.random.default_rng(seed)
    occupied = np.zeros((nx, ny, nz), dtype=bool)
    thickness, x0, x1 = 2, aisle + 1, nx - aisle - 1
    y = aisle + 1
    rows = 0
    while y + thickness + aisle + 1 <= ny:
        occupied[x0:x1, y : y + thickness, 1 : 1 + shelf] = True
        for _ in range(1 + int(rng.integers(2))):
            start = int(rng.integers(x0, max(x0 + 1, x1 - aisle)))
            occupied[start : start + aisle, y : y + thickness, 1:] = False
        y += thickness + aisle
        rows += 1

    logger.debug(f"Generated warehouse {occupied.shape} with {rows} rows")
    return GroundTruthWorld(_close(occupied), resolution)


def generate_multilevel(
    seed: int,
    size: Tuple[float, float] = (14.4, 12.0),
    height: float = 6.3,
    resolution: float = 0.3,
    deck_height: float = 2.7,
    hole_width: float = 3.6,
) -> GroundTruthWorld:
    """
    Two floors separated by a one voxel thick deck at
    `deck_height`. A square stairwell hole, aligned to multiples
    of four voxels, connects them. Pillars hold the deck and
    crates stand on both floors.
    """
    nx, ny = (_voxels(s, resolution) for s in size)
    nz = _voxels(height, resolution)
    deck = _voxels(deck_height, resolution)
    hole = _voxels(hole_width, resolution)
    if deck < 4 or nz - deck < 6 or min(nx, ny) < hole + 8:
        raise ValueError(
            f"Multi-level world of size {size} x {height} m cannot hold "
            f"a deck at {deck_height} m with a {hole_width} m hole"
        )

    rng = np.random.default_rng(seed)
    occupied = np.zeros((nx, ny, nz), dtype=bool)
    occupied[:, :, deck] = True
    hx = 4 * int(rng.integers(1, max(2, (nx - hole - 4) // 4)))
    hy = 4 * int(rng.integers(1, max(2, (ny - hole - 4) // 4)))
    occupied[hx : hx + hole, hy : hy + hole, deck] = False

    for ix in range(6, nx - 4, 12):
        for iy in range(6, ny - 4, 12):
            if hx - 1 <= ix <= hx + hole and hy - 1 <= iy <= hy + hole:
                continue
            occupied[ix, iy, 1:deck] = True

    for base, top in ((1, deck), (deck + 1, nz - 1)):
        for _ in range(3):
            cx = int(rng.integers(2, nx - 4))
            cy = int(rng.integers(2, ny - 4))
            if hx - 3 <= cx <= hx + hole and hy - 3 <= cy <= hy + hole:
                continue
            crate = slice(base, min(top, base + 3))
            occupied[cx : cx + 2, cy : cy + 2, crate] = True

    logger.debug(f"Generated multi-level world {occupied.shape}")
    return GroundTruthWorld(_close(occupied), resolution)


GENERATORS: Dict[str, Callable[..., GroundTruthWorld]] = {
    "maze": generate_maze,
    "warehouse": generate_warehouse,
    "multilevel": generate_multilevel,
}


def generate_world(kind: str, seed: int, **kwargs) -> GroundTruthWorld:
    try:
        generator = GENERATORS[kind]
    except KeyError:
        raise ValueError(
            f"Unknown world kind {kind}, expected one of {list(GENERATORS)}"
        )
    return generator(seed, **kwargs)


def dump_world(world: GroundTruthWorld, f: BinaryIO) -> None:
    voxw.dump(world.occupied.astype(np.uint8), world.resolution, f)


def read_world(f: BinaryIO) -> GroundTruthWorld:
    grid, resolution = voxw.load(f)
    if grid.max(initial=0) > 1:
        raise ValueError(
            "Voxel-world file holds tri-state map data, not a ground truth"
        )
    return GroundTruthWorld(grid.astype(bool), resolution)


def save_world(world: GroundTruthWorld, path: Union[str, Path]) -> None:
    with open(path, "wb") as f:
        dump_world(world, f)


def load_world(path: Union[str, Path]) -> GroundTruthWorld:
    with open(path, "rb") as f:
        return read_world(f)


def resolve_world(source: Union[str, Path]) -> GroundTruthWorld:
    """
    Build a world from `source`, either a voxel-world file or
    a generator reference of the form `kind:seed`
    """
    source = str(source)
    kind, sep, seed = source.partition(":")
    if sep and kind in GENERATORS:
        try:
            seed = int(seed)
        except ValueError:
            raise ValueError(f"Invalid seed in world source {source}")
        return generate_world(kind, seed)
    if not Path(source).exists():
        raise ValueError(
            f"World source {source} is neither a file nor one of "
            f"{[f'{k}:SEED' for k in GENERATORS]}"
        )
    return load_world(source)
