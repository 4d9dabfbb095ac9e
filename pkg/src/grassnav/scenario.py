"""Scenario configuration: the JSON schema that fully describes a run.

Loading is strict: unknown keys anywhere in the document are an error, and
error messages carry the JSON path of the offending key so scenario files
can be debugged without reading this module.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ScenarioError(Exception):
    """Scenario file violates the schema."""


def _check_keys(d: dict, allowed: set[str], path: str) -> None:
    if not isinstance(d, dict):
        raise ScenarioError(f"{path}: expected object, got {type(d).__name__}")
    extra = set(d) - allowed
    if extra:
        raise ScenarioError(f"{path}: unknown key(s) {sorted(extra)}")


def _num(d: dict, key: str, path: str, default=None) -> float:
    v = d.get(key, default)
    if v is None:
        raise ScenarioError(f"{path}.{key}: required")
    if not isinstance(v, (int, float)) or isinstance(v, bool) or not math.isfinite(v):
        raise ScenarioError(f"{path}.{key}: expected finite number, got {v!r}")
    return float(v)


def _int(d: dict, key: str, path: str, default=None) -> int:
    v = d.get(key, default)
    if v is None:
        raise ScenarioError(f"{path}.{key}: required")
    if not isinstance(v, int) or isinstance(v, bool):
        raise ScenarioError(f"{path}.{key}: expected integer, got {v!r}")
    return v


def _bool(d: dict, key: str, path: str, default: bool) -> bool:
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ScenarioError(f"{path}.{key}: expected bool, got {v!r}")
    return v


def _xy(v: Any, path: str) -> tuple[float, float]:
    if not (isinstance(v, list) and len(v) == 2):
        raise ScenarioError(f"{path}: expected [x, y]")
    return float(v[0]), float(v[1])


@dataclass
class LandmarkZone:
    region: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    count: int
    half_life_s: float
    regenerate: bool = False

    @staticmethod
    def from_dict(d: dict, path: str) -> "LandmarkZone":
        _check_keys(d, {"region", "count", "half_life_s", "regenerate"}, path)
        region = d.get("region")
        if not (isinstance(region, list) and len(region) == 4):
            raise ScenarioError(f"{path}.region: expected [xmin, ymin, xmax, ymax]")
        return LandmarkZone(
            region=tuple(float(v) for v in region),
            count=_int(d, "count", path),
            half_life_s=_num(d, "half_life_s", path),
            regenerate=_bool(d, "regenerate", path, False),
        )


@dataclass
class AgentConfig:
    radius: float
    waypoints: list[tuple[float, float, float]]  # (t, x, y), t increasing

    @staticmethod
    def from_dict(d: dict, path: str) -> "AgentConfig":
        _check_keys(d, {"radius", "waypoints"}, path)
        wps = d.get("waypoints")
        if not isinstance(wps, list) or len(wps) < 1:
            raise ScenarioError(f"{path}.waypoints: expected non-empty list of [t, x, y]")
        parsed = []
        for i, w in enumerate(wps):
            if not (isinstance(w, list) and len(w) == 3):
                raise ScenarioError(f"{path}.waypoints[{i}]: expected [t, x, y]")
            parsed.append((float(w[0]), float(w[1]), float(w[2])))
        return AgentConfig(radius=_num(d, "radius", path), waypoints=parsed)


@dataclass
class DockConfig:
    position: tuple[float, float]
    heading: float
    width: float = 0.8
    wing_length: float = 0.5
    wing_angle_deg: float = 45.0
    runway_length: float = 2.0
    docked_offset: float = 0.35
    charge_radius: float = 0.35

    @staticmethod
    def from_dict(d: dict, path: str) -> "DockConfig":
        _check_keys(d, {"position", "heading", "width", "wing_length", "wing_angle_deg",
                        "runway_length", "docked_offset", "charge_radius"}, path)
        return DockConfig(
            position=_xy(d.get("position"), f"{path}.position"),
            heading=_num(d, "heading", path),
            width=_num(d, "width", path, 0.8),
            wing_length=_num(d, "wing_length", path, 0.5),
            wing_angle_deg=_num(d, "wing_angle_deg", path, 45.0),
            runway_length=_num(d, "runway_length", path, 2.0),
            docked_offset=_num(d, "docked_offset", path, 0.35),
            charge_radius=_num(d, "charge_radius", path, 0.35),
        )


@dataclass
class PlotConfig:
    id: str
    position: tuple[float, float]
    quadrant: str = "SW"

    @staticmethod
    def from_dict(d: dict, path: str) -> "PlotConfig":
        _check_keys(d, {"id", "position", "quadrant"}, path)
        pid = d.get("id")
        if not isinstance(pid, str) or not pid:
            raise ScenarioError(f"{path}.id: expected non-empty string")
        return PlotConfig(
            id=pid,
            position=_xy(d.get("position"), f"{path}.position"),
            quadrant=str(d.get("quadrant", "SW")),
        )


@dataclass
class ObstacleConfig:
    points: list[tuple[float, float]]  # polygon vertices or 2-point wall

    @staticmethod
    def from_dict(d: dict, path: str) -> "ObstacleConfig":
        _check_keys(d, {"points"}, path)
        pts = d.get("points")
        if not isinstance(pts, list) or len(pts) < 2:
            raise ScenarioError(f"{path}.points: expected >= 2 vertices")
        return ObstacleConfig(points=[_xy(p, f"{path}.points[{i}]") for i, p in enumerate(pts)])


@dataclass
class WorldConfig:
    bounds: tuple[float, float, float, float]
    plots: list[PlotConfig] = field(default_factory=list)
    landmark_zones: list[LandmarkZone] = field(default_factory=list)
    obstacles: list[ObstacleConfig] = field(default_factory=list)
    agents: list[AgentConfig] = field(default_factory=list)
    dock: DockConfig | None = None

    @staticmethod
    def from_dict(d: dict, path: str) -> "WorldConfig":
        _check_keys(d, {"bounds", "plots", "landmark_zones", "obstacles", "agents", "dock"}, path)
        bounds = d.get("bounds")
        if not (isinstance(bounds, list) and len(bounds) == 4):
            raise ScenarioError(f"{path}.bounds: expected [xmin, ymin, xmax, ymax]")
        bounds = tuple(float(v) for v in bounds)
        if bounds[2] <= bounds[0] or bounds[3] <= bounds[1]:
            raise ScenarioError(f"{path}.bounds: empty rectangle")
        dock = d.get("dock")
        wc = WorldConfig(
            bounds=bounds,
            plots=[PlotConfig.from_dict(p, f"{path}.plots[{i}]")
                   for i, p in enumerate(d.get("plots", []))],
            landmark_zones=[LandmarkZone.from_dict(z, f"{path}.landmark_zones[{i}]")
                            for i, z in enumerate(d.get("landmark_zones", []))],
            obstacles=[ObstacleConfig.from_dict(o, f"{path}.obstacles[{i}]")
                       for i, o in enumerate(d.get("obstacles", []))],
            agents=[AgentConfig.from_dict(a, f"{path}.agents[{i}]")
                    for i, a in enumerate(d.get("agents", []))],
            dock=DockConfig.from_dict(dock, f"{path}.dock") if dock is not None else None,
        )
        ids = [p.id for p in wc.plots]
        if len(set(ids)) != len(ids):
            raise ScenarioError(f"{path}.plots: duplicate plot ids")
        return wc


@dataclass
class RobotConfig:
    start_pose: tuple[float, float, float] = (0.0, 0.0, 0.0)
    v_max: float = 1.0
    w_max: float = 2.0
    noise_v: float = 0.0
    noise_w: float = 0.0

    @staticmethod
    def from_dict(d: dict, path: str) -> "RobotConfig":
        _check_keys(d, {"start_pose", "v_max", "w_max", "actuation_noise"}, path)
        sp = d.get("start_pose", [0.0, 0.0, 0.0])
        if not (isinstance(sp, list) and len(sp) == 3):
            raise ScenarioError(f"{path}.start_pose: expected [x, y, theta]")
        noise = d.get("actuation_noise", {})
        _check_keys(noise, {"v", "w"}, f"{path}.actuation_noise")
        return RobotConfig(
            start_pose=tuple(float(v) for v in sp),
            v_max=_num(d, "v_max", path, 1.0),
            w_max=_num(d, "w_max", path, 2.0),
            noise_v=_num(noise, "v", f"{path}.actuation_noise", 0.0),
            noise_w=_num(noise, "w", f"{path}.actuation_noise", 0.0),
        )


@dataclass
class BatteryConfig:
    # Defaults give full-speed (1 m/s) endurance of 291600 / 45 = 6480 s = 1.8 h.
    capacity_j: float = 291600.0
    idle_w: float = 20.0
    k_v: float = 25.0  # J per metre
    k_w: float = 5.0   # J per radian
    charge_w: float = 2000.0

    @staticmethod
    def from_dict(d: dict, path: str) -> "BatteryConfig":
        _check_keys(d, {"capacity_j", "idle_w", "k_v", "k_w", "charge_w"}, path)
        return BatteryConfig(
            capacity_j=_num(d, "capacity_j", path, 291600.0),
            idle_w=_num(d, "idle_w", path, 20.0),
            k_v=_num(d, "k_v", path, 25.0),
            k_w=_num(d, "k_w", path, 5.0),
            charge_w=_num(d, "charge_w", path, 2000.0),
        )


@dataclass
class CameraConfig:
    fov_deg: float = 100.0
    range_m: float = 8.0
    bearing_noise: float = 0.0
    range_noise: float = 0.0
    descriptor_noise: float = 0.0
    descriptor_dim: int = 16

    @staticmethod
    def from_dict(d: dict, path: str) -> "CameraConfig":
        _check_keys(d, {"fov_deg", "range_m", "bearing_noise", "range_noise",
                        "descriptor_noise", "descriptor_dim"}, path)
        return CameraConfig(
            fov_deg=_num(d, "fov_deg", path, 100.0),
            range_m=_num(d, "range_m", path, 8.0),
            bearing_noise=_num(d, "bearing_noise", path, 0.0),
            range_noise=_num(d, "range_noise", path, 0.0),
            descriptor_noise=_num(d, "descriptor_noise", path, 0.0),
            descriptor_dim=_int(d, "descriptor_dim", path, 16),
        )


@dataclass
class LidarConfig:
    beams: int = 540
    fov_deg: float = 270.0
    max_range: float = 10.0
    range_noise: float = 0.0

    @staticmethod
    def from_dict(d: dict, path: str) -> "LidarConfig":
        _check_keys(d, {"beams", "fov_deg", "max_range", "range_noise"}, path)
        return LidarConfig(
            beams=_int(d, "beams", path, 540),
            fov_deg=_num(d, "fov_deg", path, 270.0),
            max_range=_num(d, "max_range", path, 10.0),
            range_noise=_num(d, "range_noise", path, 0.0),
        )


@dataclass
class SafetyConfig:
    min_object_size: float = 0.1
    max_internal_gap: float = 0.15
    stop_zone: tuple[float, float] = (1.0, 0.8)   # length ahead, full width
    slow_zone: tuple[float, float] = (2.5, 1.6)
    v_slow: float = 0.3

    @staticmethod
    def from_dict(d: dict, path: str) -> "SafetyConfig":
        _check_keys(d, {"min_object_size", "max_internal_gap", "stop_zone",
                        "slow_zone", "v_slow"}, path)
        return SafetyConfig(
            min_object_size=_num(d, "min_object_size", path, 0.1),
            max_internal_gap=_num(d, "max_internal_gap", path, 0.15),
            stop_zone=_xy(d.get("stop_zone", [1.0, 0.8]), f"{path}.stop_zone"),
            slow_zone=_xy(d.get("slow_zone", [2.5, 1.6]), f"{path}.slow_zone"),
            v_slow=_num(d, "v_slow", path, 0.3),
        )


@dataclass
class LocalisationConfig:
    min_inliers: int = 10
    tau_d: float = 0.4
    tau_g: float = 0.15
    radius: int = 3
    n_lost: int = 20
    n_reseed: int = 40
    vo_trans_noise: float = 0.0   # sigma per metre travelled
    vo_rot_noise: float = 0.0     # sigma per radian turned

    @staticmethod
    def from_dict(d: dict, path: str) -> "LocalisationConfig":
        _check_keys(d, {"min_inliers", "tau_d", "tau_g", "radius", "n_lost",
                        "n_reseed", "vo_noise"}, path)
        noise = d.get("vo_noise", {})
        _check_keys(noise, {"trans", "rot"}, f"{path}.vo_noise")
        return LocalisationConfig(
            min_inliers=_int(d, "min_inliers", path, 10),
            tau_d=_num(d, "tau_d", path, 0.4),
            tau_g=_num(d, "tau_g", path, 0.15),
            radius=_int(d, "radius", path, 3),
            n_lost=_int(d, "n_lost", path, 20),
            n_reseed=_int(d, "n_reseed", path, 40),
            vo_trans_noise=_num(noise, "trans", f"{path}.vo_noise", 0.0),
            vo_rot_noise=_num(noise, "rot", f"{path}.vo_noise", 0.0),
        )


@dataclass
class TeachRepeatConfig:
    keyframe_spacing: float = 1.0
    k_heading: float = 1.5
    lookahead: float = 1.5
    v_nominal: float = 0.8
    goal_tolerance: float = 0.1
    t_abort: float = 30.0
    window: int = 5

    @staticmethod
    def from_dict(d: dict, path: str) -> "TeachRepeatConfig":
        _check_keys(d, {"keyframe_spacing", "k_heading", "lookahead", "v_nominal",
                        "goal_tolerance", "t_abort", "window"}, path)
        return TeachRepeatConfig(
            keyframe_spacing=_num(d, "keyframe_spacing", path, 1.0),
            k_heading=_num(d, "k_heading", path, 1.5),
            lookahead=_num(d, "lookahead", path, 1.5),
            v_nominal=_num(d, "v_nominal", path, 0.8),
            goal_tolerance=_num(d, "goal_tolerance", path, 0.1),
            t_abort=_num(d, "t_abort", path, 30.0),
            window=_int(d, "window", path, 5),
        )


@dataclass
class PidConfig:
    kp: float
    ki: float
    kd: float
    clamp: float

    @staticmethod
    def from_dict(d: dict, path: str, kp, ki, kd, clamp) -> "PidConfig":
        _check_keys(d, {"kp", "ki", "kd", "clamp"}, path)
        return PidConfig(
            kp=_num(d, "kp", path, kp),
            ki=_num(d, "ki", path, ki),
            kd=_num(d, "kd", path, kd),
            clamp=_num(d, "clamp", path, clamp),
        )


@dataclass
class DockingConfig:
    tau_split: float = 0.03
    tau_merge_deg: float = 10.0
    g_merge: float = 0.1
    group_gap: float = 0.3
    accept_residual: float = 0.05
    len_tol: float = 0.25
    ang_tol_deg: float = 12.0
    t_unseen: float = 2.0
    t_search: float = 15.0
    d_docked: float = 0.03
    d_runway: float = 0.3
    align_tol_deg: float = 5.0
    w_search: float = 0.5
    speed_pid: PidConfig = field(default_factory=lambda: PidConfig(0.8, 0.0, 0.0, 0.4))
    heading_pid: PidConfig = field(default_factory=lambda: PidConfig(2.0, 0.0, 0.1, 0.8))

    @staticmethod
    def from_dict(d: dict, path: str) -> "DockingConfig":
        _check_keys(d, {"tau_split", "tau_merge_deg", "g_merge", "group_gap",
                        "accept_residual", "len_tol", "ang_tol_deg", "t_unseen",
                        "t_search", "d_docked", "d_runway", "align_tol_deg",
                        "w_search", "speed_pid", "heading_pid"}, path)
        return DockingConfig(
            tau_split=_num(d, "tau_split", path, 0.03),
            tau_merge_deg=_num(d, "tau_merge_deg", path, 5.0),
            g_merge=_num(d, "g_merge", path, 0.1),
            group_gap=_num(d, "group_gap", path, 0.3),
            accept_residual=_num(d, "accept_residual", path, 0.05),
            len_tol=_num(d, "len_tol", path, 0.25),
            ang_tol_deg=_num(d, "ang_tol_deg", path, 12.0),
            t_unseen=_num(d, "t_unseen", path, 2.0),
            t_search=_num(d, "t_search", path, 15.0),
            d_docked=_num(d, "d_docked", path, 0.03),
            d_runway=_num(d, "d_runway", path, 0.3),
            align_tol_deg=_num(d, "align_tol_deg", path, 5.0),
            w_search=_num(d, "w_search", path, 0.5),
            speed_pid=PidConfig.from_dict(d.get("speed_pid", {}), f"{path}.speed_pid",
                                          0.8, 0.0, 0.0, 0.4),
            heading_pid=PidConfig.from_dict(d.get("heading_pid", {}), f"{path}.heading_pid",
                                            2.0, 0.0, 0.1, 0.8),
        )


@dataclass
class MissionConfig:
    margin: float = 1.3
    capture_radius: float = 0.5
    reteach_loss_rate: float = 0.1
    reteach_window: int = 5

    @staticmethod
    def from_dict(d: dict, path: str) -> "MissionConfig":
        _check_keys(d, {"margin", "capture_radius", "reteach_loss_rate",
                        "reteach_window"}, path)
        return MissionConfig(
            margin=_num(d, "margin", path, 1.3),
            capture_radius=_num(d, "capture_radius", path, 0.5),
            reteach_loss_rate=_num(d, "reteach_loss_rate", path, 0.1),
            reteach_window=_int(d, "reteach_window", path, 5),
        )


@dataclass
class VocabularyConfig:
    size: int = 256
    sample: int = 2000
    iters: int = 12

    @staticmethod
    def from_dict(d: dict, path: str) -> "VocabularyConfig":
        _check_keys(d, {"size", "sample", "iters"}, path)
        return VocabularyConfig(
            size=_int(d, "size", path, 256),
            sample=_int(d, "sample", path, 2000),
            iters=_int(d, "iters", path, 12),
        )


@dataclass
class SupergraphConfig:
    dock_node: str
    nodes: dict[str, tuple[float, float]]
    node_plots: dict[str, str]  # node code -> plot id (targets)
    edges: list[tuple[str, str]]

    @staticmethod
    def from_dict(d: dict, path: str) -> "SupergraphConfig":
        _check_keys(d, {"dock_node", "nodes", "edges"}, path)
        nodes_raw = d.get("nodes")
        if not isinstance(nodes_raw, dict) or not nodes_raw:
            raise ScenarioError(f"{path}.nodes: expected non-empty object")
        nodes, node_plots = {}, {}
        for code, nd in nodes_raw.items():
            _check_keys(nd, {"position", "plot"}, f"{path}.nodes.{code}")
            nodes[code] = _xy(nd.get("position"), f"{path}.nodes.{code}.position")
            if nd.get("plot"):
                node_plots[code] = str(nd["plot"])
        edges = []
        for i, e in enumerate(d.get("edges", [])):
            if not (isinstance(e, list) and len(e) == 2 and all(isinstance(c, str) for c in e)):
                raise ScenarioError(f"{path}.edges[{i}]: expected [code_a, code_b]")
            if e[0] not in nodes or e[1] not in nodes:
                raise ScenarioError(f"{path}.edges[{i}]: unknown node code")
            edges.append((e[0], e[1]))
        dock_node = d.get("dock_node")
        if dock_node not in nodes:
            raise ScenarioError(f"{path}.dock_node: unknown node {dock_node!r}")
        return SupergraphConfig(dock_node=dock_node, nodes=nodes,
                                node_plots=node_plots, edges=edges)


@dataclass
class CampaignConfig:
    days: int = 42
    accel: float = 100.0
    targets_per_day: int = 8
    reteach: bool = True

    @staticmethod
    def from_dict(d: dict, path: str) -> "CampaignConfig":
        _check_keys(d, {"days", "accel", "targets_per_day", "reteach"}, path)
        return CampaignConfig(
            days=_int(d, "days", path, 42),
            accel=_num(d, "accel", path, 100.0),
            targets_per_day=_int(d, "targets_per_day", path, 8),
            reteach=_bool(d, "reteach", path, True),
        )


@dataclass
class Scenario:
    name: str
    seed: int
    dt: float
    world: WorldConfig
    robot: RobotConfig
    battery: BatteryConfig
    camera: CameraConfig
    lidar: LidarConfig
    safety: SafetyConfig
    localisation: LocalisationConfig
    teach_repeat: TeachRepeatConfig
    docking: DockingConfig
    mission: MissionConfig
    vocabulary: VocabularyConfig
    supergraph: SupergraphConfig | None = None
    campaign: CampaignConfig | None = None
    telemetry_every_n_ticks: int = 1

    @staticmethod
    def from_dict(d: dict) -> "Scenario":
        _check_keys(d, {"name", "seed", "dt", "world", "robot", "battery", "camera",
                        "lidar", "safety", "localisation", "teach_repeat", "docking",
                        "mission", "vocabulary", "supergraph", "campaign",
                        "telemetry"}, "$")
        if "world" not in d:
            raise ScenarioError("$.world: required")
        tele = d.get("telemetry", {})
        _check_keys(tele, {"every_n_ticks"}, "$.telemetry")
        sg = d.get("supergraph")
        camp = d.get("campaign")
        dt = _num(d, "dt", "$", 0.1)
        if dt <= 0:
            raise ScenarioError("$.dt: must be > 0")
        return Scenario(
            name=str(d.get("name", "scenario")),
            seed=_int(d, "seed", "$", 0),
            dt=dt,
            world=WorldConfig.from_dict(d["world"], "$.world"),
            robot=RobotConfig.from_dict(d.get("robot", {}), "$.robot"),
            battery=BatteryConfig.from_dict(d.get("battery", {}), "$.battery"),
            camera=CameraConfig.from_dict(d.get("camera", {}), "$.camera"),
            lidar=LidarConfig.from_dict(d.get("lidar", {}), "$.lidar"),
            safety=SafetyConfig.from_dict(d.get("safety", {}), "$.safety"),
            localisation=LocalisationConfig.from_dict(d.get("localisation", {}),
                                                      "$.localisation"),
            teach_repeat=TeachRepeatConfig.from_dict(d.get("teach_repeat", {}),
                                                     "$.teach_repeat"),
            docking=DockingConfig.from_dict(d.get("docking", {}), "$.docking"),
            mission=MissionConfig.from_dict(d.get("mission", {}), "$.mission"),
            vocabulary=VocabularyConfig.from_dict(d.get("vocabulary", {}), "$.vocabulary"),
            supergraph=SupergraphConfig.from_dict(sg, "$.supergraph") if sg else None,
            campaign=CampaignConfig.from_dict(camp, "$.campaign") if camp else None,
            telemetry_every_n_ticks=_int(tele, "every_n_ticks", "$.telemetry", 1),
        )

    @staticmethod
    def load(path: str | Path) -> "Scenario":
        with open(path, "r", encoding="utf-8") as f:
            try:
                d = json.load(f)
            except json.JSONDecodeError as e:
                raise ScenarioError(f"{path}: invalid JSON: {e}") from e
        return Scenario.from_dict(d)
