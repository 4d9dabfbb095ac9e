"""Week-scale campaign automation over a supergraph scenario.

The campaign scripts the human-in-the-loop parts that field operators
would perform by hand: the initial teach drive of every supergraph
edge, daily mission dispatch, and re-teach drives for edges the
recommender flags. Robot motion between duties (carrying the robot to an
edge start for teaching, recovering a stranded robot) is modelled as
repositioning, not driven.

Only the appearance-decay clock is accelerated; every control tick still
integrates at the scenario dt.
"""

from __future__ import annotations

import math

from .geometry import Pose2, normalize_angle
from .mission import MissionStatus, edge_ref
from .runtime import Mode, Session
from .scenario import Scenario
from .telemetry import DAY_S, CampaignReport, parse_log, stats

TEACH_ARRIVE_TOL = 0.15
MAX_RETEACH_PER_DAY = 4


def _drive_teach_leg(session: Session, target: tuple[float, float],
                     tol: float = TEACH_ARRIVE_TOL) -> None:
    """Scripted operator drive toward a point while teaching."""
    v_nom = session.sc.teach_repeat.v_nominal
    guard = int(600.0 / session.dt)
    for _ in range(guard):
        pose = session.state.pose
        dist = math.hypot(target[0] - pose.x, target[1] - pose.y)
        if dist <= tol:
            return
        alpha = normalize_angle(math.atan2(target[1] - pose.y,
                                           target[0] - pose.x) - pose.theta)
        v = v_nom if abs(alpha) < math.pi / 4 else 0.0
        w = max(-1.2, min(1.2, 2.0 * alpha))
        session.teleop(v, w)
        session.tick()
    raise RuntimeError("teach drive failed to reach its target")


def teach_edge(session: Session, a: str, b: str) -> None:
    """Reposition to node a and teach-drive the edge to node b."""
    g = session.supergraph
    ax, ay = g.nodes[a]
    bx, by = g.nodes[b]
    heading = math.atan2(by - ay, bx - ax)
    session.place_robot(Pose2(ax, ay, heading))
    session.start_teach(anchor=Pose2(ax, ay, heading))
    _drive_teach_leg(session, (bx, by))
    session.stop_teach(a, b)


def initial_teach(session: Session) -> None:
    for ref in sorted(session.supergraph.edges):
        e = session.supergraph.edges[ref]
        teach_edge(session, e.a, e.b)


def reteach(session: Session, ref: str) -> None:
    e = session.supergraph.edges[ref]
    teach_edge(session, e.a, e.b)
    session.log.event(session.t, "reteach", edge=ref)
    # the fresh experience supersedes the record of the stale one
    session.traversals = [r for r in session.traversals if r.edge != ref]


def _undock(session: Session, first_leg_heading: float) -> None:
    """Scripted undock: back out to the dock supergraph node and face the
    first leg (the robot reverses out of its garage)."""
    g = session.supergraph
    dx, dy = g.nodes[g.dock_node]
    session.place_robot(Pose2(dx, dy, first_leg_heading))
    session.init_localisation(pose=Pose2(dx, dy, first_leg_heading))


def _run_mission_day(session: Session, targets: list[str]) -> None:
    g = session.supergraph
    mission = session.preview_mission(targets)
    if len(mission.route) < 2:
        return
    x0, y0 = g.nodes[mission.route[0]]
    x1, y1 = g.nodes[mission.route[1]]
    _undock(session, math.atan2(y1 - y0, x1 - x0))
    session.dispatch_mission(targets)
    guard = int(4.0 * DAY_S / session.accel / session.dt)
    for _ in range(guard):
        m = session._mission
        done = m is None or m.status in (MissionStatus.COMPLETED,
                                         MissionStatus.ABORTED)
        if done and session.mode in (Mode.IDLE, Mode.CHARGING):
            break
        session.tick()
    m = session._mission
    if m is not None and m.status in (MissionStatus.PLANNED,
                                      MissionStatus.RUNNING):
        session.abort_mission()
    if session.mode not in (Mode.IDLE, Mode.CHARGING):
        session._set_mode(Mode.IDLE)
    if not session.world.in_charge_zone(session.state.pose):
        # stranded (lost abort or docking failure): recovered by hand
        session.log.event(session.t, "recovery")
        session.place_robot(session.world.dock.docked_pose_world())


def run_campaign(scenario: Scenario, seed: int | None = None,
                 accel: float | None = None, log_stream=None
                 ) -> tuple[Session, CampaignReport]:
    if scenario.supergraph is None or scenario.campaign is None:
        raise ValueError("campaign runs need a supergraph and campaign config")
    session = Session(scenario, seed=seed, accel=accel, log_stream=log_stream)
    camp = scenario.campaign
    rng = session.rng["session"]

    initial_teach(session)
    plot_nodes = sorted(session.supergraph.node_plots)
    day_s = DAY_S / session.accel          # motion-clock seconds per day
    campaign_start = session.t

    for day in range(camp.days):
        day_end = campaign_start + (day + 1) * day_s
        k = min(camp.targets_per_day, len(plot_nodes))
        targets = sorted(rng.choice(plot_nodes, size=k, replace=False))
        _run_mission_day(session, targets)
        if camp.reteach:
            for ref in session.reteach_recommendations()[:MAX_RETEACH_PER_DAY]:
                reteach(session, ref)
        # the operator returns the robot to its garage so it charges overnight
        if not session.world.in_charge_zone(session.state.pose):
            session.place_robot(session.world.dock.docked_pose_world())
        # charge / idle out the rest of the day
        remaining = day_end - session.t
        if remaining > 0:
            session.run_for(remaining)

    session.finalise()
    report = stats(parse_log(session.log.getvalue()))
    return session, report
