"""Deterministic 2D grassland simulator.

Differential-drive kinematics, a visual-feature field with time-based
appearance decay, LiDAR raycasting against obstacles and the dock
structure, scripted dynamic agents, and the battery model.

All randomness flows through numpy Generators handed in by the caller, so
a scenario seed fully determines every run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, normalize_angle
from .scenario import (BatteryConfig, CameraConfig, DockConfig, LidarConfig,
                       RobotConfig, Scenario, WorldConfig)


# ---------------------------------------------------------------------------
# landmarks

class LandmarkField:
    """Array-backed store of point landmarks with exponential persistence."""

    def __init__(self, positions: np.ndarray, descriptors: np.ndarray,
                 birth: np.ndarray, half_life: np.ndarray, regenerate: np.ndarray):
        n = len(positions)
        self.ids = np.arange(n, dtype=np.int64)
        self.positions = np.asarray(positions, dtype=float).reshape(n, 2)
        self.descriptors = np.asarray(descriptors, dtype=float)
        self.birth = np.asarray(birth, dtype=float)
        self.half_life = np.asarray(half_life, dtype=float)
        self.regenerate = np.asarray(regenerate, dtype=bool)
        self._next_id = n

    def __len__(self) -> int:
        return len(self.ids)

    def persistence(self, t: float) -> np.ndarray:
        """Survival probability of each landmark at time t, in [0, 1]."""
        age = np.maximum(t - self.birth, 0.0)
        with np.errstate(over="ignore"):
            p = np.exp2(-age / self.half_life)
        return np.clip(p, 0.0, 1.0)

    def refresh(self, t: float, rng: np.random.Generator,
                threshold: float = 0.25, jitter: float = 0.3) -> int:
        """Replace decayed regenerating landmarks with fresh ones.

        Models seasonal regrowth: a withered feature population is replaced
        in place by new features with new appearance. Returns the number of
        landmarks reborn.
        """
        p = self.persistence(t)
        dead = self.regenerate & (p < threshold)
        n = int(dead.sum())
        if n == 0:
            return 0
        dim = self.descriptors.shape[1]
        fresh = rng.standard_normal((n, dim))
        fresh /= np.linalg.norm(fresh, axis=1, keepdims=True)
        self.descriptors[dead] = fresh
        self.positions[dead] += rng.normal(0.0, jitter, (n, 2))
        self.birth[dead] = t
        self.ids[dead] = np.arange(self._next_id, self._next_id + n)
        self._next_id += n
        return n


def _unit_descriptors(rng: np.random.Generator, n: int, dim: int) -> np.ndarray:
    d = rng.standard_normal((n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def build_landmarks(cfg: WorldConfig, dim: int, rng: np.random.Generator) -> LandmarkField:
    pos, hls, regen = [], [], []
    for zone in cfg.landmark_zones:
        x0, y0, x1, y1 = zone.region
        xs = rng.uniform(x0, x1, zone.count)
        ys = rng.uniform(y0, y1, zone.count)
        pos.append(np.column_stack([xs, ys]))
        hls.append(np.full(zone.count, zone.half_life_s))
        regen.append(np.full(zone.count, zone.regenerate))
    if pos:
        positions = np.vstack(pos)
        half_life = np.concatenate(hls)
        regenerate = np.concatenate(regen)
    else:
        positions = np.zeros((0, 2))
        half_life = np.zeros(0)
        regenerate = np.zeros(0, dtype=bool)
    descs = _unit_descriptors(rng, len(positions), dim)
    bx0, by0, bx1, by1 = cfg.bounds
    positions[:, 0] = np.clip(positions[:, 0], bx0, bx1)
    positions[:, 1] = np.clip(positions[:, 1], by0, by1)
    return LandmarkField(positions, descs, np.zeros(len(positions)),
                         half_life, regenerate)


# ---------------------------------------------------------------------------
# dock geometry

@dataclass
class DockLayout:
    """Dock placement in the world plus its segment model in the dock frame.

    The dock frame has x pointing outward along the approach direction.
    The structure is an open "U": a back wall plus two splayed wings.
    """
    frame: Pose2                      # dock frame expressed in world frame
    model_segments: np.ndarray        # (k, 4) x1 y1 x2 y2 in dock frame
    runway_start: np.ndarray          # dock frame
    runway_end: np.ndarray            # dock frame (== docked position)
    charge_radius: float

    @staticmethod
    def from_config(cfg: DockConfig) -> "DockLayout":
        w2 = cfg.width / 2.0
        a = math.radians(cfg.wing_angle_deg)
        wx, wy = cfg.wing_length * math.cos(a), cfg.wing_length * math.sin(a)
        segs = np.array([
            [0.0, -w2, 0.0, w2],                  # back wall
            [0.0, w2, wx, w2 + wy],               # upper wing
            [0.0, -w2, wx, -(w2 + wy)],           # lower wing
        ])
        return DockLayout(
            frame=Pose2(cfg.position[0], cfg.position[1], cfg.heading),
            model_segments=segs,
            runway_start=np.array([cfg.runway_length + cfg.docked_offset, 0.0]),
            runway_end=np.array([cfg.docked_offset, 0.0]),
            charge_radius=cfg.charge_radius,
        )

    def world_segments(self) -> np.ndarray:
        c, s = math.cos(self.frame.theta), math.sin(self.frame.theta)
        r = np.array([[c, -s], [s, c]])
        out = np.empty_like(self.model_segments)
        for i, seg in enumerate(self.model_segments):
            p = r @ seg[:2] + [self.frame.x, self.frame.y]
            q = r @ seg[2:] + [self.frame.x, self.frame.y]
            out[i] = [p[0], p[1], q[0], q[1]]
        return out

    def charge_centre(self) -> np.ndarray:
        c, s = math.cos(self.frame.theta), math.sin(self.frame.theta)
        r = np.array([[c, -s], [s, c]])
        return r @ self.runway_end + [self.frame.x, self.frame.y]

    def docked_pose_world(self) -> Pose2:
        """Ground-truth goal pose: at the runway end, facing the back wall."""
        p = self.charge_centre()
        return Pose2(p[0], p[1], normalize_angle(self.frame.theta + math.pi))


# ---------------------------------------------------------------------------
# robot and sensors

@dataclass
class RobotState:
    pose: Pose2
    linear_velocity: float = 0.0
    angular_velocity: float = 0.0
    battery: float = 0.0
    odometer: float = 0.0
    estop: bool = False
    battery_empty: bool = False


@dataclass
class CameraObservation:
    timestamp: float
    landmark_ids: np.ndarray    # oracle/test use only; barred from navigation
    bearings: np.ndarray
    ranges: np.ndarray
    descriptors: np.ndarray

    def __len__(self) -> int:
        return len(self.bearings)

    def points(self) -> np.ndarray:
        """Observed landmark positions in the robot frame, (n, 2)."""
        return np.column_stack([self.ranges * np.cos(self.bearings),
                                self.ranges * np.sin(self.bearings)])


@dataclass
class LidarScan:
    timestamp: float
    angles: np.ndarray   # sensor-frame bearings, strictly increasing
    ranges: np.ndarray   # clamped to max_range
    max_range: float

    def points(self) -> np.ndarray:
        """Cartesian returns in the robot frame, max-range returns excluded."""
        hit = self.ranges < self.max_range - 1e-9
        r, a = self.ranges[hit], self.angles[hit]
        return np.column_stack([r * np.cos(a), r * np.sin(a)])


@dataclass
class ScriptedAgent:
    radius: float
    waypoints: list[tuple[float, float, float]]

    def position(self, t: float) -> np.ndarray:
        wps = self.waypoints
        if t <= wps[0][0]:
            return np.array(wps[0][1:])
        for (t0, x0, y0), (t1, x1, y1) in zip(wps, wps[1:]):
            if t <= t1:
                u = (t - t0) / (t1 - t0) if t1 > t0 else 1.0
                return np.array([x0 + u * (x1 - x0), y0 + u * (y1 - y0)])
        return np.array(wps[-1][1:])


class World:
    """Static geometry plus the landmark field and scripted agents."""

    def __init__(self, cfg: WorldConfig, landmarks: LandmarkField):
        self.bounds = cfg.bounds
        self.landmarks = landmarks
        self.plots = list(cfg.plots)
        self.dock = DockLayout.from_config(cfg.dock) if cfg.dock else None
        self.agents = [ScriptedAgent(a.radius, a.waypoints) for a in cfg.agents]
        segs = []
        for obs in cfg.obstacles:
            pts = obs.points
            pairs = zip(pts, pts[1:] + ([pts[0]] if len(pts) > 2 else []))
            segs.extend([p[0], p[1], q[0], q[1]] for p, q in pairs)
        if self.dock is not None:
            segs.extend(self.dock.world_segments().tolist())
        self._segments = np.asarray(segs, dtype=float).reshape(-1, 4)

    @staticmethod
    def from_scenario(sc: Scenario, rng: np.random.Generator) -> "World":
        lm = build_landmarks(sc.world, sc.camera.descriptor_dim, rng)
        return World(sc.world, lm)

    def segments(self) -> np.ndarray:
        return self._segments

    def agent_discs(self, t: float) -> np.ndarray:
        """(m, 3) of centre x, centre y, radius for dynamic agents at t."""
        if not self.agents:
            return np.zeros((0, 3))
        return np.array([[*a.position(t), a.radius] for a in self.agents])

    def in_bounds(self, pose: Pose2) -> bool:
        x0, y0, x1, y1 = self.bounds
        return x0 <= pose.x <= x1 and y0 <= pose.y <= y1

    def in_charge_zone(self, pose: Pose2) -> bool:
        if self.dock is None:
            return False
        c = self.dock.charge_centre()
        return math.hypot(pose.x - c[0], pose.y - c[1]) <= self.dock.charge_radius


# ---------------------------------------------------------------------------
# kinematics and battery

def step(world: World, state: RobotState, command: tuple[float, float], dt: float,
         robot_cfg: RobotConfig, battery_cfg: BatteryConfig,
         rng: np.random.Generator | None = None) -> RobotState:
    """Advance the robot one tick under unicycle kinematics.

    Mutates and returns `state`. Estop and an empty battery both force the
    commanded velocities to zero; idle power drains the battery regardless.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    v = float(np.clip(command[0], -robot_cfg.v_max, robot_cfg.v_max))
    w = float(np.clip(command[1], -robot_cfg.w_max, robot_cfg.w_max))
    if state.estop:
        v = w = 0.0
    if state.battery <= 0.0:
        state.battery_empty = True
        v = w = 0.0
    if rng is not None and robot_cfg.noise_v > 0 and v != 0.0:
        v += robot_cfg.noise_v * abs(v) * rng.standard_normal()
    if rng is not None and robot_cfg.noise_w > 0 and w != 0.0:
        w += robot_cfg.noise_w * abs(w) * rng.standard_normal()

    th = state.pose.theta
    if abs(w) < 1e-12:
        nx = state.pose.x + v * math.cos(th) * dt
        ny = state.pose.y + v * math.sin(th) * dt
        nth = th
    else:
        nx = state.pose.x + v / w * (math.sin(th + w * dt) - math.sin(th))
        ny = state.pose.y - v / w * (math.cos(th + w * dt) - math.cos(th))
        nth = th + w * dt
    state.pose = Pose2(nx, ny, nth)
    state.linear_velocity = v
    state.angular_velocity = w
    state.odometer += abs(v) * dt
    drain = (battery_cfg.idle_w + battery_cfg.k_v * abs(v)
             + battery_cfg.k_w * abs(w)) * dt
    state.battery = max(0.0, state.battery - drain)
    if state.battery <= 0.0:
        state.battery_empty = True
    return state


def charge(world: World, state: RobotState, dt: float,
           battery_cfg: BatteryConfig) -> bool:
    """Charge the battery if the robot sits in the dock charging zone.

    Returns False (no-op) when called outside the zone.
    """
    if not world.in_charge_zone(state.pose):
        return False
    state.battery = min(battery_cfg.capacity_j, state.battery + battery_cfg.charge_w * dt)
    if state.battery > 0:
        state.battery_empty = False
    return True


# ---------------------------------------------------------------------------
# sensor models

def sense_camera(world: World, pose: Pose2, t: float, cfg: CameraConfig,
                 rng: np.random.Generator) -> CameraObservation:
    """Observe in-FOV landmarks, each included with probability persistence(t)."""
    lm = world.landmarks
    if len(lm) == 0:
        return CameraObservation(t, np.zeros(0, dtype=np.int64), np.zeros(0),
                                 np.zeros(0), np.zeros((0, cfg.descriptor_dim)))
    rel = lm.positions - [pose.x, pose.y]
    dist = np.hypot(rel[:, 0], rel[:, 1])
    near = dist <= cfg.range_m
    idx = np.nonzero(near)[0]
    if len(idx) == 0:
        return CameraObservation(t, np.zeros(0, dtype=np.int64), np.zeros(0),
                                 np.zeros(0), np.zeros((0, cfg.descriptor_dim)))
    bearing = np.arctan2(rel[idx, 1], rel[idx, 0]) - pose.theta
    bearing = np.arctan2(np.sin(bearing), np.cos(bearing))
    fov2 = math.radians(cfg.fov_deg) / 2.0
    vis = (np.abs(bearing) <= fov2) & (dist[idx] > 0.05)
    idx, bearing = idx[vis], bearing[vis]
    if len(idx) == 0:
        return CameraObservation(t, np.zeros(0, dtype=np.int64), np.zeros(0),
                                 np.zeros(0), np.zeros((0, cfg.descriptor_dim)))
    p = lm.persistence(t)[idx]
    keep = rng.random(len(idx)) < p
    idx, bearing = idx[keep], bearing[keep]
    r = dist[idx]
    desc = lm.descriptors[idx].copy()
    if cfg.bearing_noise > 0:
        bearing = bearing + rng.normal(0.0, cfg.bearing_noise, len(idx))
    if cfg.range_noise > 0:
        r = np.maximum(r + rng.normal(0.0, cfg.range_noise, len(idx)), 0.01)
    if cfg.descriptor_noise > 0 and len(idx):
        desc = desc + rng.normal(0.0, cfg.descriptor_noise, desc.shape)
        desc /= np.linalg.norm(desc, axis=1, keepdims=True)
    return CameraObservation(t, lm.ids[idx].copy(),
                             np.arctan2(np.sin(bearing), np.cos(bearing)),
                             np.asarray(r, dtype=float), desc)


def raycast(origin: np.ndarray, theta: float, angles: np.ndarray, max_range: float,
            segments: np.ndarray, discs: np.ndarray) -> np.ndarray:
    """Per-beam range to the nearest segment or disc, clamped to max_range."""
    world_angles = theta + angles
    d = np.column_stack([np.cos(world_angles), np.sin(world_angles)])  # (m, 2)
    best = np.full(len(angles), max_range)

    if len(segments):
        p = segments[:, :2]                       # (s, 2)
        e = segments[:, 2:] - segments[:, :2]     # (s, 2)
        po = p - origin                           # (s, 2)
        denom = d[:, 0, None] * e[None, :, 1] - d[:, 1, None] * e[None, :, 0]
        with np.errstate(divide="ignore", invalid="ignore"):
            tt = (po[None, :, 0] * e[None, :, 1] - po[None, :, 1] * e[None, :, 0]) / denom
            uu = (po[None, :, 0] * d[:, 1, None] - po[None, :, 1] * d[:, 0, None]) / denom
        ok = (np.abs(denom) > 1e-12) & (tt > 1e-9) & (uu >= 0.0) & (uu <= 1.0)
        tt = np.where(ok, tt, np.inf)
        best = np.minimum(best, tt.min(axis=1))

    for cx, cy, r in discs:
        oc = origin - [cx, cy]
        b = d[:, 0] * oc[0] + d[:, 1] * oc[1]
        c0 = oc[0] ** 2 + oc[1] ** 2 - r ** 2
        disc = b * b - c0
        hit = disc >= 0
        root = np.sqrt(np.where(hit, disc, 0.0))
        t1 = -b - root
        t1 = np.where(hit & (t1 > 1e-9), t1, np.inf)
        best = np.minimum(best, t1)

    return np.minimum(best, max_range)


def sense_lidar(world: World, pose: Pose2, t: float, cfg: LidarConfig,
                rng: np.random.Generator) -> LidarScan:
    fov = math.radians(cfg.fov_deg)
    angles = np.linspace(-fov / 2.0, fov / 2.0, cfg.beams)
    ranges = raycast(np.array([pose.x, pose.y]), pose.theta, angles,
                     cfg.max_range, world.segments(), world.agent_discs(t))
    if cfg.range_noise > 0:
        hit = ranges < cfg.max_range
        noise = rng.normal(0.0, cfg.range_noise, cfg.beams)
        ranges = np.where(hit, np.clip(ranges + noise, 0.01, cfg.max_range), ranges)
    return LidarScan(t, angles, ranges, cfg.max_range)
