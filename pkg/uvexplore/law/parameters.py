from pathlib import Path
from typing import Union

import luigi
from cloudpathlib import CloudPath

from uvexplore.world import GENERATORS

PATH_LIKE = Union[CloudPath, Path, str]


class PathParameter(luigi.Parameter):
    """
    luigi `Parameter` class that handles parsing strings
    into pathlib.Path or cloudpathlib.S3Path objects.
    """

    def parse(self, x: PATH_LIKE):
        if isinstance(x, (Path, CloudPath)):
            return x / ""
        if isinstance(x, str):
            if x.startswith("s3://"):
                return CloudPath(x) / ""
            else:
                return Path(x) / ""
        else:
            raise ValueError(
                f"Expected string, Path, or CloudPath, got {type(x)}"
            )

    def serialize(self, x):
        return str(x)

    def normalize(self, x):
        return self.parse(x)


class WorldParameter(luigi.Parameter):
    """
    World source: either a generator reference `kind:seed`,
    with `kind` one of the procedural world generators, or
    the path of a voxel-world file.
    """

    def parse(self, x: str) -> str:
        x = str(x)
        kind, sep, seed = x.partition(":")
        if sep and kind in GENERATORS:
            try:
                int(seed)
            except ValueError:
                raise ValueError(f"Invalid seed in world source {x}")
        elif not x.endswith(".voxw"):
            raise ValueError(
                f"World source {x} is neither a .voxw file nor one of "
                f"{[f'{k}:SEED' for k in GENERATORS]}"
            )
        return x

    def normalize(self, x):
        return self.parse(x)

    @staticmethod
    def generator(x: str):
        """`(kind, seed)` for generator references, None for files"""
        kind, sep, seed = x.partition(":")
        if sep and kind in GENERATORS:
            return kind, int(seed)
        return None
