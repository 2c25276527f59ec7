"""
Codec for the voxel-world binary format shared by ground
truth worlds and exported occupancy maps:

    b"VOXW" | u8 version | u32 nx, ny, nz | f32 resolution | body

all little-endian, where the body holds one byte per voxel
with x varying fastest, then y, then z.
"""

import struct
from typing import BinaryIO, Tuple

import numpy as np

MAGIC = b"VOXW"
VERSION = 1
_HEADER = struct.Struct("<4sBIIIf")


def dump(grid: np.ndarray, resolution: float, f: BinaryIO) -> None:
    """Write a (nx, ny, nz) byte grid to the open binary stream `f`"""
    if grid.ndim != 3:
        raise ValueError(f"Expected a 3D voxel grid, got shape {grid.shape}")
    nx, ny, nz = grid.shape
    f.write(_HEADER.pack(MAGIC, VERSION, nx, ny, nz, resolution))
    f.write(np.asarray(grid, dtype=np.uint8).tobytes(order="F"))


def load(f: BinaryIO) -> Tuple[np.ndarray, float]:
    """
    Read a voxel grid from the open binary stream `f`

    Returns:
        The (nx, ny, nz) uint8 grid and the resolution in meters.
        The resolution is stored as a float32, so it is rounded
        back to 7 significant digits on read.
    """
    header = f.read(_HEADER.size)
    if len(header) != _HEADER.size:
        raise ValueError("Truncated voxel-world header")
    magic, version, nx, ny, nz, resolution = _HEADER.unpack(header)
    if magic != MAGIC:
        raise ValueError(f"Bad voxel-world magic bytes {magic!r}")
    if version != VERSION:
        raise ValueError(f"Unsupported voxel-world version {version}")

    size = nx * ny * nz
    body = f.read(size)
    if len(body) != size:
        raise ValueError(
            f"Voxel-world body has {len(body)} bytes, expected {size}"
        )
    grid = np.frombuffer(body, dtype=np.uint8).reshape(
        (nx, ny, nz), order="F"
    )
    return grid.copy(), float(f"{resolution:.7g}")
