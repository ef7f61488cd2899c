"""Planar/3D poses and angle helpers."""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_deg(angle: float) -> float:
    """Normalize an angle in degrees to (-180, 180]."""
    wrapped = math.fmod(angle, 360.0)
    if wrapped <= -180.0:
        wrapped += 360.0
    elif wrapped > 180.0:
        wrapped -= 360.0
    return wrapped


@dataclass
class Pose2D:
    x: float = 0.0
    y: float = 0.0
    yaw_deg: float = 0.0

    def __post_init__(self) -> None:
        self.yaw_deg = wrap_deg(self.yaw_deg)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def bearing_to_deg(self, other: "Pose2D") -> float:
        return math.degrees(math.atan2(other.y - self.y, other.x - self.x))


@dataclass
class Pose3D:
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    yaw_deg: float = 0.0

    def __post_init__(self) -> None:
        self.yaw_deg = wrap_deg(self.yaw_deg)

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def horizontal_distance_to(self, other: "Pose3D") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)
