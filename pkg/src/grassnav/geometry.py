"""Planar rigid-body poses and points.

Everything downstream (simulator, localisation, docking) works in SE(2);
poses are immutable value types and all operations are pure functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def normalize_angle(theta: float) -> float:
    """Reduce an angle to (-pi, pi]; ties at pi map to +pi."""
    return math.pi - (math.pi - theta) % TWO_PI


@dataclass(frozen=True)
class Point2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite point ({self.x}, {self.y})")


@dataclass(frozen=True)
class Pose2:
    """Planar pose; theta is always stored normalised to (-pi, pi]."""

    x: float = 0.0
    y: float = 0.0
    theta: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def position(self) -> Point2:
        return Point2(self.x, self.y)


IDENTITY = Pose2(0.0, 0.0, 0.0)


def compose(a: Pose2, b: Pose2) -> Pose2:
    """Group composition a ⊕ b (b expressed in a's frame)."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def inverse(a: Pose2) -> Pose2:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2(-(c * a.x + s * a.y), -(-s * a.x + c * a.y), -a.theta)


def transform_point(frame: Pose2, p: Point2) -> Point2:
    """Express p (given in `frame`) in the parent frame of `frame`."""
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return Point2(frame.x + c * p.x - s * p.y, frame.y + s * p.x + c * p.y)


def relative(a: Pose2, b: Pose2) -> Pose2:
    """Pose of b expressed in a's frame: inverse(a) ⊕ b."""
    return compose(inverse(a), b)


def distance(a: Pose2 | Point2, b: Pose2 | Point2) -> float:
    return math.hypot(a.x - b.x, a.y - b.y)
