"""LiDAR safety curtain.

Clusters angle-ordered scan returns with a size/gap rule, then maps
clusters falling inside nested robot-frame zones to a speed limit or an
emergency stop. Pure functions; the orchestrator clamps every controller's
command with the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .scenario import SafetyConfig
from .world import LidarScan


@dataclass
class ObstacleCluster:
    points: np.ndarray       # (n, 2) robot frame, angle order preserved
    span: float              # max pairwise extent
    nearest_range: float


@dataclass
class SafetyDecision:
    speed_limit: float
    estop: bool
    triggering: list[int]    # indices into the cluster list


def _span(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    d2 = ((points[:, None, :] - points[None, :, :]) ** 2).sum(axis=2)
    return float(np.sqrt(d2.max()))


def cluster_scan(scan: LidarScan, min_object_size: float,
                 max_internal_gap: float) -> list[ObstacleCluster]:
    """Single pass over angle-ordered returns.

    Max-range returns are discarded first; groups split where the Euclidean
    gap between consecutive points exceeds max_internal_gap; groups whose
    span falls below min_object_size are dropped (the long-grass-blade
    case).
    """
    if np.any(np.diff(scan.angles) <= 0):
        raise ValueError("scan angles must be strictly increasing")
    hit = scan.ranges < scan.max_range - 1e-9
    if not hit.any():
        return []
    r, a = scan.ranges[hit], scan.angles[hit]
    pts = np.column_stack([r * np.cos(a), r * np.sin(a)])
    gaps = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    breaks = np.nonzero(gaps > max_internal_gap)[0]
    clusters = []
    start = 0
    for b in list(breaks) + [len(pts) - 1]:
        group = pts[start:b + 1]
        start = b + 1
        if _span(group) >= min_object_size:
            rng_min = float(np.hypot(group[:, 0], group[:, 1]).min())
            clusters.append(ObstacleCluster(group, _span(group), rng_min))
    return clusters


def _in_zone(points: np.ndarray, zone: tuple[float, float]) -> bool:
    """Zone is a rectangle ahead of the robot: x in [0, length], |y| <= width/2."""
    length, width = zone
    inside = (points[:, 0] >= 0.0) & (points[:, 0] <= length) \
        & (np.abs(points[:, 1]) <= width / 2.0)
    return bool(inside.any())


def decide(clusters: list[ObstacleCluster], cfg: SafetyConfig,
           v_max: float) -> SafetyDecision:
    """Map clusters to (speed_limit, estop); estop implies a zero limit."""
    estop = False
    slow = False
    trig: list[int] = []
    for i, c in enumerate(clusters):
        if _in_zone(c.points, cfg.stop_zone):
            estop = True
            trig.append(i)
        elif _in_zone(c.points, cfg.slow_zone):
            slow = True
            trig.append(i)
    if estop:
        return SafetyDecision(0.0, True, trig)
    if slow:
        return SafetyDecision(cfg.v_slow, False, trig)
    return SafetyDecision(v_max, False, [])
