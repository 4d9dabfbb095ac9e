"""End-to-end runtime orchestration tests.

These run the whole stack: simulated world, teach recorder, localiser,
route follower, safety curtain, docking and telemetry, driven through the
Session command API exactly as the service layer drives it.
"""

import math

import pytest

from grassnav.campaign import _undock, teach_edge
from grassnav.docking import DockingController
from grassnav.geometry import Pose2
from grassnav.mission import MissionStatus
from grassnav.runtime import CommandError, Mode, Session, run_scenario
from grassnav.scenario import Scenario
from grassnav.telemetry import parse_log, stats


def patch_scenario(seed=5):
    """A small meadow: dock plus two plot nodes, all-stable landmarks."""
    return Scenario.from_dict({
        "name": "patch", "seed": seed, "dt": 0.1,
        "world": {
            "bounds": [-10.0, -8.0, 16.0, 14.0],
            "landmark_zones": [
                {"region": [-9.0, -7.0, 15.0, 13.0], "count": 160,
                 "half_life_s": 1e12, "regenerate": False},
            ],
            "plots": [{"id": "QA", "position": [8.0, 0.0]},
                      {"id": "QB", "position": [8.0, 8.0]}],
            "dock": {"position": [-5.0, 0.0], "heading": 0.0},
        },
        "camera": {"fov_deg": 360.0, "range_m": 8.0},
        "robot": {"start_pose": [-2.65, 0.0, 0.0]},
        "supergraph": {
            "dock_node": "DOCK",
            "nodes": {
                "DOCK": {"position": [-2.65, 0.0], "plot": None},
                "A": {"position": [8.0, 0.0], "plot": "QA"},
                "B": {"position": [8.0, 8.0], "plot": "QB"},
            },
            "edges": [["DOCK", "A"], ["A", "B"]],
        },
    })


def run_mission_to_completion(session, mission, max_ticks=30000):
    for _ in range(max_ticks):
        session.tick()
        if (mission.status in (MissionStatus.COMPLETED, MissionStatus.ABORTED)
                and session.mode in (Mode.IDLE, Mode.CHARGING)):
            return
    raise AssertionError("mission did not settle")


# ---------------------------------------------------------------------------
# session basics


def test_zero_duration_run_produces_valid_empty_log():
    session, report = run_scenario(patch_scenario(), duration_s=0.0)
    records = parse_log(session.log.getvalue())
    assert records[0]["type"] == "header"
    assert records[0]["scenario"] == "patch"
    kinds = [r["kind"] for r in records if r["type"] == "event"]
    assert kinds[0] == "supergraph"
    assert kinds[-1] == "end"
    assert report.runs == []
    assert report.cumulative_autonomous_m == 0.0
    assert report.edges_total == 2


def test_seed_argument_overrides_scenario_seed():
    s = Session(patch_scenario(), seed=123)
    assert s.seed == 123
    rec = parse_log(s.log.getvalue())[0]
    assert rec["seed"] == 123


def test_idle_session_time_advances_and_battery_drains():
    s = Session(patch_scenario())
    b0 = s.state.battery
    s.run_for(10.0)
    assert s.t == pytest.approx(10.0)
    # idle draw only: 20 W for 10 s
    assert b0 - s.state.battery == pytest.approx(200.0, rel=1e-6)


# ---------------------------------------------------------------------------
# teleop


def test_teleop_requires_teleop_mode():
    s = Session(patch_scenario())
    with pytest.raises(CommandError):
        s.teleop(0.5, 0.0)


def test_teleop_commands_expire_after_half_a_second():
    s = Session(patch_scenario())
    s.start_teleop()
    s.teleop(0.8, 0.0)
    s.run_for(0.5)
    moved = s.state.odometer
    assert moved > 0.3
    s.run_for(2.0)  # no further commands: must coast to a stop
    assert s.state.odometer - moved < 0.81 * 0.6
    assert s.state.linear_velocity == 0.0


def test_teleop_speed_is_clamped_to_safety_limit():
    sc = patch_scenario()
    s = Session(sc)
    s.start_teleop()
    for _ in range(5):
        s.teleop(99.0, 0.0)
        s.tick()
    assert s.state.linear_velocity <= sc.robot.v_max + 1e-9


# ---------------------------------------------------------------------------
# teach / repeat / mission / dock, full loop


def test_teach_then_mission_completes_and_docks():
    sc = patch_scenario()
    s = Session(sc)
    for a, b in [("DOCK", "A"), ("A", "B")]:
        teach_edge(s, a, b)
    assert set(s.graph.active_experience) == {"A|DOCK", "A|B"}
    taught = {ref: s.paths[eid][2].length
              for ref, eid in s.graph.active_experience.items()}

    _undock(s, 0.0)
    mission = s.dispatch_mission(["B"])
    assert mission.route[0] == "DOCK" and mission.route[-1] == "DOCK"
    run_mission_to_completion(s, mission)

    assert mission.status is MissionStatus.COMPLETED
    assert s.mode is Mode.CHARGING
    assert s.world.in_charge_zone(s.state.pose)

    s.finalise()
    report = stats(parse_log(s.log.getvalue()))
    assert report.missions_completed == 1
    assert report.captures == 1
    # out and back over both edges; odometry must match the taught lengths
    expected = 2 * sum(taught.values())
    assert report.cumulative_autonomous_m == pytest.approx(expected, rel=0.05)
    for st in report.per_edge.values():
        assert st.aborted == 0


def test_mission_requires_localisation():
    s = Session(patch_scenario())
    for a, b in [("DOCK", "A"), ("A", "B")]:
        teach_edge(s, a, b)
    with pytest.raises(CommandError):
        s.dispatch_mission(["B"])


def test_abort_mid_leg_returns_to_idle_and_logs_aborted_edge():
    s = Session(patch_scenario())
    for a, b in [("DOCK", "A"), ("A", "B")]:
        teach_edge(s, a, b)
    _undock(s, 0.0)
    mission = s.dispatch_mission(["B"])
    s.run_for(5.0)
    assert s.mode is Mode.REPEAT
    s.abort_mission()
    assert s.mode is Mode.IDLE
    assert mission.status is MissionStatus.ABORTED
    s.finalise()
    report = stats(parse_log(s.log.getvalue()))
    assert sum(st.aborted for st in report.per_edge.values()) == 1
    assert report.missions_completed == 0


def test_mode_event_stream_brackets_the_run():
    s = Session(patch_scenario())
    teach_edge(s, "DOCK", "A")
    records = parse_log(s.log.getvalue())
    changes = [(r["from"], r["to"]) for r in records
               if r["type"] == "event" and r["kind"] == "mode"]
    assert changes[0] == ("IDLE", "TEACH")
    assert changes[-1][1] == "IDLE"


# ---------------------------------------------------------------------------
# safety interaction


def test_dock_returns_are_exempt_from_the_curtain():
    sc = patch_scenario()
    s = Session(sc)
    # nose-up to the dock: well inside the stop rectangle
    pose = Pose2(-4.0, 0.0, math.pi)
    s.place_robot(pose)

    s.start_teleop()
    s.tick()
    assert s._estop, "dock structure must trip the curtain for a teleop robot"
    s.stop_teleop()

    s._docking = DockingController(s.dock_model, sc.docking)
    s._dock_prior = None
    s._set_mode(Mode.DOCKING)
    s.tick()
    assert not s._estop, "attributed dock points must not trip the curtain"


def test_estop_event_logged_once_per_transition():
    s = Session(patch_scenario())
    s.place_robot(Pose2(-4.0, 0.0, math.pi))
    s.start_teleop()
    s.run_for(1.0)
    records = parse_log(s.log.getvalue())
    estops = [r for r in records
              if r["type"] == "event" and r["kind"] == "estop"]
    assert len(estops) == 1 and estops[0]["engaged"] is True


# ---------------------------------------------------------------------------
# determinism


def scripted_run(seed):
    s = Session(patch_scenario(seed=seed))
    for a, b in [("DOCK", "A"), ("A", "B")]:
        teach_edge(s, a, b)
    _undock(s, 0.0)
    mission = s.dispatch_mission(["B"])
    run_mission_to_completion(s, mission)
    s.finalise()
    return s.log.getvalue()


def test_identical_seeds_give_byte_identical_logs():
    assert scripted_run(7) == scripted_run(7)


def test_different_seeds_diverge():
    a, b = scripted_run(7), scripted_run(8)
    assert a != b


# ---------------------------------------------------------------------------
# snapshot


def test_snapshot_reports_mission_and_pose():
    s = Session(patch_scenario())
    for a, b in [("DOCK", "A"), ("A", "B")]:
        teach_edge(s, a, b)
    _undock(s, 0.0)
    s.dispatch_mission(["B"])
    s.run_for(2.0)
    snap = s.snapshot()
    assert snap["mode"] == "REPEAT"
    assert snap["mission"]["status"] == "running"
    assert snap["mission"]["targets"] == ["B"]
    assert snap["localised"] and not snap["lost"]
    assert snap["battery"] < snap["battery_capacity"]
    est = snap["est"]
    truth = snap["truth"]
    assert math.hypot(est[0] - truth[0], est[1] - truth[1]) < 0.5
