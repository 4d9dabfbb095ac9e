"""Tick orchestrator: one Session owns the whole robot stack.

Per tick: sense -> safety curtain -> localisation -> active controller
(teach / repeat / docking / teleop) -> mission executor -> kinematic step
-> telemetry. All randomness comes from named sub-streams of the scenario
seed, so a run is a pure function of (scenario, seed, commands).

Time acceleration scales only the appearance-decay clock; controllers
always integrate at the scenario dt.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .docking import (DockFix, DockingController, DockingPhase, DockModel,
                      dock_point_mask, extract_segments, match_dock)
from .expgraph import ExperienceGraph, build_vocabulary
from .geometry import IDENTITY, Pose2, normalize_angle, relative
from .localisation import Localiser, vo_step
from .mission import (Directive, DirectiveKind, Mission, MissionExecutor,
                      MissionStatus, PlanningError, Supergraph,
                      TraversalRecord, edge_ref, plan_tour,
                      reteach_recommender, shortest_path)
from .safety import SafetyDecision, cluster_scan, decide
from .scenario import Scenario
from .teach_repeat import (ControllerKind, RepeatController, RepeatState,
                           TaughtPath, TeachRecorder, TeachTick,
                           reversed_path)
from .telemetry import TelemetryLog
from .world import (LidarScan, RobotState, World, charge, sense_camera,
                    sense_lidar, step)

RNG_STREAMS = ("world", "vocab", "camera", "lidar", "motion", "vo", "session")
TELEOP_TIMEOUT_S = 0.5
REFRESH_INTERVAL_S = 86400.0   # landmark regrowth check, decay clock


class Mode(enum.Enum):
    IDLE = "IDLE"
    TEACH = "TEACH"
    REPEAT = "REPEAT"
    DOCKING = "DOCKING"
    CHARGING = "CHARGING"
    TELEOP = "TELEOP"


class CommandError(Exception):
    """A session command that cannot be honoured in the current state."""


@dataclass
class LegProgress:
    edge: str
    from_node: str
    to_node: str
    start_odometer: float
    inlier_sum: float = 0.0
    inlier_ticks: int = 0
    lost_any: bool = False

    @property
    def mean_inliers(self) -> float:
        return self.inlier_sum / self.inlier_ticks if self.inlier_ticks else 0.0


class Session:
    """One simulated robot plus its maps, missions, and telemetry."""

    def __init__(self, scenario: Scenario, seed: int | None = None,
                 accel: float | None = None, log_stream=None):
        self.sc = scenario
        self.seed = scenario.seed if seed is None else seed
        if accel is not None:
            self.accel = accel
        elif scenario.campaign is not None:
            self.accel = scenario.campaign.accel
        else:
            self.accel = 1.0
        self.dt = scenario.dt

        streams = np.random.SeedSequence(self.seed).spawn(len(RNG_STREAMS))
        self.rng = {name: np.random.default_rng(s)
                    for name, s in zip(RNG_STREAMS, streams)}

        self.world = World.from_scenario(scenario, self.rng["world"])
        self.graph = ExperienceGraph(self._build_vocabulary())
        self.localiser = Localiser(self.graph, scenario.localisation)
        self.supergraph = (Supergraph.from_config(scenario.supergraph)
                           if scenario.supergraph else None)
        self.state = RobotState(Pose2(*scenario.robot.start_pose),
                                battery=scenario.battery.capacity_j)
        self.dock_model = (DockModel.from_layout(self.world.dock)
                           if self.world.dock else None)

        self.t = 0.0
        self.tick_count = 0
        self.mode = Mode.IDLE
        self.log = TelemetryLog(log_stream)
        self.log.header(scenario.name, self.seed, self.accel, self.dt)
        self.telemetry_every = max(1, scenario.telemetry_every_n_ticks)
        if self.supergraph:
            self.log.event(0.0, "supergraph",
                           nodes=len(self.supergraph.nodes),
                           edges=len(self.supergraph.edges))

        # taught paths: experience id -> (start node, end node, path)
        self.paths: dict[int, tuple[str | None, str | None, TaughtPath]] = {}
        self.traversals: list[TraversalRecord] = []

        self._teleop: tuple[float, float, float] | None = None  # v, w, stamp
        self._teach: TeachRecorder | None = None
        self._teach_anchor_known = False
        self._vo_prev: Pose2 = self.state.pose
        self._estop = False
        self._speed_limit = scenario.robot.v_max
        self._last_fix_inliers = 0
        self._mission: Mission | None = None
        self._executor: MissionExecutor | None = None
        self._repeat: RepeatController | None = None
        self._align_target: float | None = None
        self._leg: LegProgress | None = None
        self._docking: DockingController | None = None
        self._dock_prior: DockFix | None = None
        self._last_refresh = 0.0
        self._id_counter = 0

    # -- helpers -------------------------------------------------------------

    def _build_vocabulary(self) -> np.ndarray:
        cfg = self.sc.vocabulary
        rng = self.rng["vocab"]
        lm = None
        dim = self.sc.camera.descriptor_dim
        # sample from the landmark population when there is one, so the
        # vocabulary covers the descriptors it will actually quantise
        from .world import build_landmarks  # local to avoid cycle at import
        if sum(z.count for z in self.sc.world.landmark_zones) > 0:
            lm = self.world.landmarks.descriptors
        if lm is None or len(lm) == 0:
            lm = rng.standard_normal((max(cfg.size * 4, 512), dim))
            lm = lm / np.linalg.norm(lm, axis=1, keepdims=True)
        n = min(cfg.sample, len(lm))
        pick = rng.choice(len(lm), size=n, replace=False)
        k = min(cfg.size, n)
        return build_vocabulary(lm[pick], k, cfg.iters, rng)

    def _set_mode(self, mode: Mode) -> None:
        if mode is self.mode:
            return
        self.log.event(self.t, "mode", **{"from": self.mode.value},
                       to=mode.value, odometer=self.state.odometer)
        self.mode = mode

    def _next_id(self) -> int:
        self._id_counter += 1
        return self._id_counter

    # -- commands ------------------------------------------------------------

    def teleop(self, v: float, w: float) -> None:
        if self.mode not in (Mode.TELEOP, Mode.TEACH):
            raise CommandError(f"teleop not accepted in mode {self.mode.value}")
        self._teleop = (float(v), float(w), self.t)

    def start_teleop(self) -> None:
        if self.mode not in (Mode.IDLE, Mode.CHARGING, Mode.TELEOP):
            raise CommandError(f"cannot teleop in mode {self.mode.value}")
        self._set_mode(Mode.TELEOP)

    def stop_teleop(self) -> None:
        if self.mode is Mode.TELEOP:
            self._teleop = None
            self._set_mode(Mode.IDLE)

    def start_teach(self, anchor: Pose2 | None = None) -> None:
        if self.mode not in (Mode.IDLE, Mode.CHARGING, Mode.TELEOP):
            raise CommandError(f"cannot teach in mode {self.mode.value}")
        if anchor is None and self.localiser.state.initialised \
                and not self.localiser.state.lost:
            anchor = self.localiser.state.pose_estimate
        self._teach_anchor_known = anchor is not None
        self._teach = TeachRecorder(self.graph,
                                    self.sc.teach_repeat.keyframe_spacing,
                                    anchor=anchor)
        self.log.event(self.t, "teach_start")
        self._set_mode(Mode.TEACH)

    def stop_teach(self, start_node: str | None = None,
                   end_node: str | None = None) -> TaughtPath:
        """Finish teaching; optionally bind the experience to an edge.

        Unknown codes create the nodes under the robot's taught endpoints.
        """
        if self._teach is None:
            raise CommandError("no teach in progress")
        rec, self._teach = self._teach, None
        self._teleop = None
        path = rec.finish()
        ref = None
        if start_node and end_node:
            if self.supergraph is None:
                raise CommandError("no supergraph to attach the edge to")
            ref = edge_ref(start_node, end_node)
            first = self.graph.keyframes[path.keyframe_ids[0]].map_pose
            last = self.graph.keyframes[path.keyframe_ids[-1]].map_pose
            for code, pose in ((start_node, first), (end_node, last)):
                if code not in self.supergraph.nodes:
                    self.supergraph.add_node(code, (pose.x, pose.y))
            if ref not in self.supergraph.edges:
                self.supergraph.add_edge(start_node, end_node,
                                         max(path.length, 1e-6))
            self.supergraph.edges[ref].experiences.append(path.experience_id)
            self.graph.assign_experience(ref, path.experience_id)
        self.paths[path.experience_id] = (start_node, end_node, path)
        self.log.event(self.t, "teach_done", experience=path.experience_id,
                       edge=ref, keyframes=len(path.keyframe_ids),
                       length=path.length)
        self._set_mode(Mode.IDLE)
        return path

    def init_localisation(self, pose: Pose2 | None = None,
                          node: str | None = None,
                          heading: float = 0.0) -> None:
        """Operator seed: explicit pose, or a place code plus heading."""
        if pose is None:
            if node is None:
                raise CommandError("need a pose or a place code")
            if self.supergraph is None or node not in self.supergraph.nodes:
                raise CommandError(f"unknown place code {node!r}")
            x, y = self.supergraph.nodes[node]
            pose = Pose2(x, y, heading)
        self.localiser.initialise(pose)
        self.log.event(self.t, "localisation_init",
                       pose=[pose.x, pose.y, pose.theta])

    def dispatch_mission(self, targets: list[str],
                         return_home: bool = True) -> Mission:
        if self.supergraph is None:
            raise CommandError("no supergraph loaded")
        if self._mission is not None and self._mission.status in (
                MissionStatus.PLANNED, MissionStatus.RUNNING):
            raise CommandError("a mission is already active")
        if not self.localiser.state.initialised:
            raise CommandError("localisation must be initialised first")
        start = self._nearest_node(self.localiser.state.pose_estimate)
        mission = plan_tour(self.supergraph, start, targets,
                            bat=self.sc.battery,
                            v_nominal=self.sc.teach_repeat.v_nominal,
                            mission_id=self._next_id())
        if return_home and mission.route[-1] != self.supergraph.dock_node:
            back, _ = shortest_path(self.supergraph, mission.route[-1],
                                    self.supergraph.dock_node)
            mission.route = mission.route + back[1:]
        for a, b in zip(mission.route, mission.route[1:]):
            ref = edge_ref(a, b)
            if self.graph.active_experience.get(ref) is None:
                raise CommandError(f"route edge {ref!r} has not been taught")
        self._mission = mission
        self._executor = MissionExecutor(self.supergraph, mission,
                                         self.sc.mission, self.sc.battery,
                                         self.sc.teach_repeat.v_nominal)
        self._executor.returning = return_home
        self._executor.start()
        self.log.event(self.t, "mission_start", id=mission.id,
                       targets=mission.targets, route=mission.route,
                       length=mission.length,
                       energy_estimate=mission.energy_estimate)
        self._advance_mission()
        return mission

    def preview_mission(self, targets: list[str]) -> Mission:
        if self.supergraph is None:
            raise CommandError("no supergraph loaded")
        start = (self._nearest_node(self.localiser.state.pose_estimate)
                 if self.localiser.state.initialised
                 else self.supergraph.dock_node)
        return plan_tour(self.supergraph, start, targets, bat=self.sc.battery,
                         v_nominal=self.sc.teach_repeat.v_nominal)

    def abort_mission(self) -> None:
        if self._executor is None or self._mission is None:
            raise CommandError("no mission to abort")
        if self._leg is not None:
            self._finish_leg("aborted")
        self._executor.abort()
        self.log.event(self.t, "mission_abort", id=self._mission.id)
        self._repeat = None
        self._executor = None
        self._set_mode(Mode.IDLE)

    def place_robot(self, pose: Pose2) -> None:
        """Scripted repositioning (campaign automation / test harnesses)."""
        self.state.pose = pose
        self._vo_prev = pose

    def _nearest_node(self, pose: Pose2) -> str:
        return min(self.supergraph.nodes,
                   key=lambda c: (math.hypot(self.supergraph.nodes[c][0] - pose.x,
                                             self.supergraph.nodes[c][1] - pose.y), c))

    # -- mission plumbing ----------------------------------------------------

    def _path_for_leg(self, a: str, b: str) -> TaughtPath:
        ref = edge_ref(a, b)
        eid = self.graph.active_experience.get(ref)
        if eid is None or eid not in self.paths:
            raise PlanningError(f"edge {ref!r} has no taught experience")
        start, _, path = self.paths[eid]
        return path if start == a else reversed_path(path)

    def _advance_mission(self) -> None:
        """Install the controller for the executor's next directive."""
        if self._executor is None:
            return
        d = self._executor.next_directive()
        if d.kind is DirectiveKind.FOLLOW_EDGE:
            a, b = d.edge
            path = self._path_for_leg(a, b)
            self._repeat = RepeatController(self.graph, path,
                                            self.sc.teach_repeat,
                                            ControllerKind.PURE_PURSUIT)
            self._leg = LegProgress(edge_ref(a, b), a, b, self.state.odometer)
            d0 = self._repeat.polyline.seg_dir[0]
            self._align_target = math.atan2(d0[1], d0[0])
            self.log.event(self.t, "edge_start", edge=edge_ref(a, b),
                           from_node=a, to_node=b)
            self._set_mode(Mode.REPEAT)
        elif d.kind is DirectiveKind.DOCK:
            self._repeat = None
            self._start_docking()
        elif d.kind is DirectiveKind.COMPLETE:
            self._finish_mission()
        elif d.kind is DirectiveKind.ABORT:
            self._repeat = None
            self._set_mode(Mode.IDLE)

    def _finish_leg(self, outcome: str) -> None:
        leg, self._leg = self._leg, None
        if leg is None:
            return
        metres = self.state.odometer - leg.start_odometer
        self.log.event(self.t, "edge_done", edge=leg.edge, outcome=outcome,
                       metres=metres, mean_inliers=leg.mean_inliers,
                       lost=leg.lost_any)
        self.traversals.append(TraversalRecord(leg.edge, leg.lost_any,
                                               leg.mean_inliers, outcome))

    def _finish_mission(self, truncated: bool | None = None) -> None:
        if self._mission is not None:
            if self._mission.status is MissionStatus.RUNNING:
                self._mission.status = MissionStatus.COMPLETED
            self.log.event(self.t, "mission_done", id=self._mission.id,
                           status=self._mission.status.value,
                           truncated=self._mission.truncated
                           if truncated is None else truncated,
                           captured=sorted(self._mission.captured))
        self._repeat = None
        self._executor = None
        self._set_mode(Mode.IDLE)

    def _start_docking(self) -> None:
        if self.dock_model is None:
            self._finish_mission()
            return
        self._docking = DockingController(self.dock_model, self.sc.docking)
        self._dock_prior = None
        self._set_mode(Mode.DOCKING)

    def reteach_recommendations(self) -> list[str]:
        return reteach_recommender(self.traversals, self.sc.mission,
                                   self.sc.localisation.min_inliers)

    # -- per-tick pipeline ----------------------------------------------------

    def _safety(self, scan: LidarScan | None) -> SafetyDecision:
        if scan is None:
            return SafetyDecision(self.sc.robot.v_max, False, [])
        if (self.mode is Mode.DOCKING and self._dock_prior is not None
                and self.dock_model is not None):
            hit_idx = np.nonzero(scan.ranges < scan.max_range - 1e-9)[0]
            mask = dock_point_mask(scan.points(), self._dock_prior,
                                   self.dock_model)
            if mask.any():
                ranges = scan.ranges.copy()
                ranges[hit_idx[mask]] = scan.max_range
                scan = LidarScan(scan.timestamp, scan.angles, ranges,
                                 scan.max_range)
        clusters = cluster_scan(scan, self.sc.safety.min_object_size,
                                self.sc.safety.max_internal_gap)
        return decide(clusters, self.sc.safety, self.sc.robot.v_max)

    def _teleop_command(self) -> tuple[float, float]:
        if self._teleop is None:
            return (0.0, 0.0)
        v, w, stamp = self._teleop
        if self.t - stamp > TELEOP_TIMEOUT_S:
            return (0.0, 0.0)
        return (v, w)

    def tick(self) -> None:
        sc = self.sc
        decay_t = self.t * self.accel
        if decay_t - self._last_refresh >= REFRESH_INTERVAL_S:
            self._last_refresh = decay_t
            reborn = self.world.landmarks.refresh(decay_t, self.rng["world"])
            if reborn:
                self.log.event(self.t, "regrowth", landmarks=reborn)

        moving = self.mode in (Mode.TEACH, Mode.REPEAT, Mode.TELEOP,
                               Mode.DOCKING)
        scan = (sense_lidar(self.world, self.state.pose, self.t, sc.lidar,
                            self.rng["lidar"]) if moving else None)

        # docking perception must see the dock before safety can exempt it
        dock_fix = None
        if self.mode is Mode.DOCKING and self.dock_model is not None:
            segs = extract_segments(scan, sc.docking, self._dock_prior)
            dock_fix = match_dock(segs, self.dock_model, sc.docking,
                                  prior=self._dock_prior, stamp=self.t)
            if dock_fix is not None:
                self._dock_prior = dock_fix

        decision = self._safety(scan)
        if decision.estop != self._estop:
            self._estop = decision.estop
            self.log.event(self.t, "estop", engaged=decision.estop)
        self._speed_limit = decision.speed_limit

        # visual odometry + camera + localisation
        true_delta = relative(self._vo_prev, self.state.pose)
        self._vo_prev = self.state.pose
        obs = None
        if self.mode in (Mode.TEACH, Mode.REPEAT, Mode.TELEOP):
            vo = vo_step(true_delta, sc.localisation, self.rng["vo"])
            obs = sense_camera(self.world, self.state.pose, decay_t,
                               sc.camera, self.rng["camera"])
            if self.mode is Mode.TEACH and self._teach is not None:
                truth = (None if self._teach_anchor_known else self.state.pose)
                self._teach.add(TeachTick(obs, vo, self.t, truth_pose=truth))
            elif self.localiser.state.initialised:
                fix, events = self.localiser.tick(vo, obs, self.t)
                for ev in events:
                    self.log.event(self.t, ev.lower())
                    if ev == "LOST" and self._leg is not None:
                        self._leg.lost_any = True
                if fix is not None:
                    self._last_fix_inliers = fix.inliers
                    if self._leg is not None:
                        self._leg.inlier_sum += fix.inliers
                        self._leg.inlier_ticks += 1

        command = (0.0, 0.0)
        if self.mode in (Mode.TEACH, Mode.TELEOP):
            v, w = self._teleop_command()
            v = float(np.clip(v, -decision.speed_limit, decision.speed_limit))
            command = (0.0, 0.0) if decision.estop else (v, w)
        elif self.mode is Mode.REPEAT and self._repeat is not None:
            est = self.localiser.state.pose_estimate
            lost = self.localiser.state.lost
            aligning = False
            if self._align_target is not None and est is not None and not lost:
                # Pure pursuit cannot turn around in place, so reversed legs
                # get an explicit spin-up to the path tangent first.
                alpha = normalize_angle(self._align_target - est.theta)
                if abs(alpha) > 0.2:
                    aligning = True
                    w = float(np.clip(2.0 * alpha, -sc.robot.w_max,
                                      sc.robot.w_max))
                    command = (0.0, 0.0 if decision.estop else w)
                else:
                    self._align_target = None
            if not aligning:
                command, rstat = self._repeat.tick(est, lost,
                                                   decision.speed_limit,
                                                   decision.estop, self.t)
                if rstat.state is RepeatState.COMPLETED:
                    self._finish_leg("ok")
                    command = (0.0, 0.0)
                    if self._executor is not None and self._leg is None:
                        leg = self._executor.current_leg()
                        if leg is not None:
                            for d in self._executor.arrive(leg[1], self.t):
                                if d.kind is DirectiveKind.CAPTURE:
                                    self.log.event(self.t, "capture",
                                                   node=d.node)
                                    self._mission.captured.setdefault(d.node,
                                                                      self.t)
                        self._advance_mission()
                elif rstat.state is RepeatState.ABORTED:
                    self._finish_leg("aborted")
                    self.abort_mission()
                    command = (0.0, 0.0)
                elif (self._executor is not None
                      and self._repeat is not None
                      and self._executor.check_battery(
                          self.state.battery,
                          max(self._repeat.polyline.length
                              - self._repeat.status.along_track, 0.0))):
                    self._executor.truncate_to_dock()
                    self.log.event(self.t, "mission_truncated",
                                   id=self._mission.id)
        elif self.mode is Mode.DOCKING and self._docking is not None:
            command, dstat = self._docking.tick(dock_fix,
                                                self.state.linear_velocity,
                                                self.t, self.dt)
            if decision.estop:
                command = (0.0, 0.0)
            else:
                v = float(np.clip(command[0], -decision.speed_limit,
                                  decision.speed_limit))
                command = (v, command[1])
            if dstat.phase is DockingPhase.DOCKED:
                self.log.event(self.t, "docked")
                self._docking = None
                self._finish_mission()
                self._set_mode(Mode.CHARGING)
            elif dstat.failed:
                self.log.event(self.t, "docking_failed")
                self._docking = None
                if self._mission is not None:
                    self._mission.status = MissionStatus.ABORTED
                self._finish_mission(truncated=self._mission.truncated
                                     if self._mission else False)

        self.state.estop = decision.estop
        step(self.world, self.state, command, self.dt, sc.robot, sc.battery,
             self.rng["motion"] if (sc.robot.noise_v or sc.robot.noise_w)
             else None)

        if self.mode in (Mode.IDLE, Mode.CHARGING):
            if self.world.in_charge_zone(self.state.pose):
                full = self.state.battery >= sc.battery.capacity_j - 1e-9
                if not full:
                    charge(self.world, self.state, self.dt, sc.battery)
                    self._set_mode(Mode.CHARGING)
                elif self.mode is Mode.CHARGING:
                    self.log.event(self.t, "charge_full")
                    self._set_mode(Mode.IDLE)
            elif self.mode is Mode.CHARGING:
                self._set_mode(Mode.IDLE)

        self.t += self.dt
        self.tick_count += 1
        if self.tick_count % self.telemetry_every == 0:
            est = self.localiser.state.pose_estimate
            self.log.tick(
                self.t, truth=[self.state.pose.x, self.state.pose.y,
                               self.state.pose.theta],
                est=None if est is None else [est.x, est.y, est.theta],
                mode=self.mode.value, inliers=self._last_fix_inliers,
                lost=self.localiser.state.lost,
                speed_limit=self._speed_limit, estop=self._estop,
                battery=self.state.battery, odometer=self.state.odometer,
                mission=self._mission.id if self._mission else None,
                edge=self._leg.edge if self._leg else None)

    def run_for(self, duration_s: float) -> None:
        n = int(round(duration_s / self.dt))
        for _ in range(n):
            self.tick()

    def finalise(self) -> None:
        self.log.event(self.t, "end", odometer=self.state.odometer,
                       battery=self.state.battery)

    # -- snapshot (service / console) -----------------------------------------

    def snapshot(self) -> dict:
        est = self.localiser.state.pose_estimate
        mission = None
        if self._mission is not None:
            mission = {
                "id": self._mission.id,
                "status": self._mission.status.value,
                "targets": self._mission.targets,
                "route": self._mission.route,
                "length": self._mission.length,
                "energy_estimate": self._mission.energy_estimate,
                "captured": sorted(self._mission.captured),
                "truncated": self._mission.truncated,
            }
        return {
            "t": self.t,
            "mode": self.mode.value,
            "truth": [self.state.pose.x, self.state.pose.y,
                      self.state.pose.theta],
            "est": None if est is None else [est.x, est.y, est.theta],
            "localised": self.localiser.state.initialised
            and not self.localiser.state.lost,
            "lost": self.localiser.state.lost,
            "inliers": self._last_fix_inliers,
            "battery": self.state.battery,
            "battery_capacity": self.sc.battery.capacity_j,
            "speed_limit": self._speed_limit,
            "estop": self._estop,
            "odometer": self.state.odometer,
            "mission": mission,
            "teach": None if self._teach is None else {
                "keyframes": len(self._teach.keyframe_ids),
                "arc": self._teach.arc_lengths[-1]
                if self._teach.arc_lengths else 0.0,
            },
        }


def run_scenario(scenario: Scenario, duration_s: float | None = None,
                 seed: int | None = None, accel: float | None = None,
                 log_stream=None):
    """Headless run. Campaign scenarios run the campaign schedule;
    otherwise the session idles (or follows operator commands) for the
    duration. Returns (session, report)."""
    from . import campaign as _campaign
    from .telemetry import parse_log, stats

    if scenario.campaign is not None and scenario.supergraph is not None:
        return _campaign.run_campaign(scenario, seed=seed, accel=accel,
                                      log_stream=log_stream)
    session = Session(scenario, seed=seed, accel=accel, log_stream=log_stream)
    if duration_s:
        session.run_for(duration_s)
    session.finalise()
    report = stats(parse_log(session.log.getvalue())) \
        if hasattr(session.log.stream, "getvalue") else None
    return session, report
