import math
from dataclasses import dataclass, replace
from typing import Iterator, Sequence, Tuple

import numpy as np


def wrap_angle(angle: float) -> float:
    """Wrap an angle in radians onto [-pi, pi)"""
    return (angle + math.pi) % (2 * math.pi) - math.pi


@dataclass(frozen=True)
class Viewpoint:
    """
    Continuous agent configuration. `yaw` is the heading
    of the sensor in radians, measured counter-clockwise
    from the +x axis.
    """

    x: float
    y: float
    z: float
    yaw: float = 0.0

    @property
    def position(self) -> Tuple[float, float, float]:
        return (self.x, self.y, self.z)

    def as_array(self) -> np.ndarray:
        return np.array(self.position, dtype=np.float64)

    def distance(self, other: "Viewpoint") -> float:
        return math.dist(self.position, other.position)

    def with_yaw(self, yaw: float) -> "Viewpoint":
        return replace(self, yaw=yaw)

    def facing(self, target: Sequence[float]) -> "Viewpoint":
        """
        Return a copy of this viewpoint with its yaw pointing
        at `target` in the horizontal plane. The yaw is kept
        if the target sits directly above or below.
        """
        dx, dy = target[0] - self.x, target[1] - self.y
        if dx == 0 and dy == 0:
            return self
        return self.with_yaw(math.atan2(dy, dx))


@dataclass(frozen=True)
class Path:
    """Ordered sequence of viewpoints from q0 to the goal"""

    viewpoints: Tuple[Viewpoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "viewpoints", tuple(self.viewpoints))

    def __len__(self) -> int:
        return len(self.viewpoints)

    def __iter__(self) -> Iterator[Viewpoint]:
        return iter(self.viewpoints)

    def __getitem__(self, i):
        return self.viewpoints[i]

    @property
    def start(self) -> Viewpoint:
        return self.viewpoints[0]

    @property
    def goal(self) -> Viewpoint:
        return self.viewpoints[-1]

    @property
    def length(self) -> float:
        return sum(
            a.distance(b)
            for a, b in zip(self.viewpoints[:-1], self.viewpoints[1:])
        )

    def positions(self) -> np.ndarray:
        return np.array([q.position for q in self.viewpoints])
