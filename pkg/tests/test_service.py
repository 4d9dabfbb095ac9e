"""Wire API tests: the service is driven exactly as the console drives it.

The ticker thread is disabled; tests advance the simulation by ticking the
underlying session directly, so every assertion is deterministic.
"""

import tempfile

import pytest
from fastapi.testclient import TestClient

from grassnav import expgraph
from grassnav.runtime import Mode
from grassnav.service import create_app
from test_runtime import patch_scenario


@pytest.fixture()
def client():
    app = create_app(patch_scenario(), autostart=False)
    with TestClient(app) as c:
        c.svc = app.state.svc
        yield c


def acquire(client, operator="alice"):
    r = client.post("/api/drive/acquire", json={"operator": operator})
    assert r.status_code == 200
    return r.json()["token"]


# ---------------------------------------------------------------------------
# status and map


def test_status_snapshot_shape(client):
    r = client.get("/api/status")
    assert r.status_code == 200
    snap = r.json()
    assert snap["mode"] == "IDLE"
    assert snap["drive_lease"] == {"holder": None}
    assert len(snap["truth"]) == 3
    assert snap["battery"] == pytest.approx(snap["battery_capacity"])


def test_map_download_is_a_loadable_container(client):
    token = acquire(client)
    client.post("/api/teach/start", json={"token": token})
    for _ in range(30):
        client.svc.session.teleop(0.8, 0.0)
        client.svc.session.tick()
    client.post("/api/teach/stop",
                json={"token": token, "start_node": "DOCK", "end_node": "A"})
    r = client.get("/api/map")
    assert r.status_code == 200
    with tempfile.NamedTemporaryFile(suffix=".gnmap") as tmp:
        tmp.write(r.content)
        tmp.flush()
        graph = expgraph.load(tmp.name)
    assert len(graph.keyframes) >= 2
    assert graph.active_experience == {"A|DOCK": 0}


# ---------------------------------------------------------------------------
# drive lease


def test_lease_conflict_names_the_holder(client):
    acquire(client, "alice")
    r = client.post("/api/drive/acquire", json={"operator": "bob"})
    assert r.status_code == 409
    assert r.json()["detail"]["holder"] == "alice"


def test_teleop_without_lease_is_rejected(client):
    r = client.post("/api/teleop", json={"token": "bogus", "v": 0.5, "w": 0.0})
    assert r.status_code == 409  # nobody holds the lease


def test_wrong_token_is_rejected_with_holder_identity(client):
    acquire(client, "alice")
    r = client.post("/api/teleop", json={"token": "bogus", "v": 0.5, "w": 0.0})
    assert r.status_code == 403
    assert r.json()["detail"]["holder"] == "alice"


def test_release_frees_the_lease(client):
    token = acquire(client, "alice")
    r = client.post("/api/drive/release", json={"token": token})
    assert r.status_code == 200
    acquire(client, "bob")


def test_release_mid_teach_finalises_the_partial_experience(client):
    token = acquire(client)
    client.post("/api/teach/start", json={"token": token})
    for _ in range(30):
        client.svc.session.teleop(0.8, 0.0)
        client.svc.session.tick()
    r = client.post("/api/drive/release", json={"token": token})
    assert r.status_code == 200
    s = client.svc.session
    assert s.mode is Mode.IDLE
    assert len(s.graph.experiences) == 1  # finalised, not dropped


# ---------------------------------------------------------------------------
# teleop


def test_teleop_moves_the_robot(client):
    token = acquire(client)
    r = client.post("/api/teleop", json={"token": token, "v": 0.8, "w": 0.0})
    assert r.status_code == 200
    for _ in range(5):
        client.svc.session.tick()
    assert client.svc.session.state.odometer > 0.3


def test_teleop_rate_limit(client):
    token = acquire(client)
    first = client.post("/api/teleop", json={"token": token, "v": 0.1, "w": 0})
    second = client.post("/api/teleop", json={"token": token, "v": 0.1, "w": 0})
    assert first.status_code == 200
    assert second.status_code == 429


# ---------------------------------------------------------------------------
# teach and localisation


def teach_edge_http(client, token, a, b, ticks=140):
    """Teach a straight edge by streaming teleop through the session."""
    import math

    from grassnav.geometry import Pose2

    g = client.svc.session.supergraph
    ax, ay = g.nodes[a]
    bx, by = g.nodes[b]
    heading = math.atan2(by - ay, bx - ax)
    client.svc.session.place_robot(Pose2(ax, ay, heading))
    r = client.post("/api/teach/start", json={"token": token})
    assert r.status_code == 200
    dist = math.hypot(bx - ax, by - ay)
    for _ in range(int(dist / 0.8 / 0.1)):
        client.svc.session.teleop(0.8, 0.0)
        client.svc.session.tick()
    r = client.post("/api/teach/stop",
                    json={"token": token, "start_node": a, "end_node": b})
    assert r.status_code == 200
    return r.json()


def test_teach_stop_reports_the_experience(client):
    token = acquire(client)
    out = teach_edge_http(client, token, "DOCK", "A")
    assert out["keyframes"] >= 10
    assert out["length"] == pytest.approx(10.65, abs=0.5)


def test_teach_stop_without_start_is_an_error(client):
    token = acquire(client)
    r = client.post("/api/teach/stop", json={"token": token})
    assert r.status_code == 409


def test_localisation_init_by_place_code(client):
    r = client.post("/api/localisation/init",
                    json={"node": "A", "heading": 1.0})
    assert r.status_code == 200
    est = client.svc.session.localiser.state.pose_estimate
    assert (est.x, est.y, est.theta) == (8.0, 0.0, 1.0)


def test_localisation_init_unknown_code(client):
    r = client.post("/api/localisation/init", json={"node": "NOPE"})
    assert r.status_code == 409


# ---------------------------------------------------------------------------
# missions


def prepare_taught(client, token):
    teach_edge_http(client, token, "DOCK", "A")
    teach_edge_http(client, token, "A", "B")
    client.post("/api/localisation/init", json={"node": "DOCK", "heading": 0.0})


def test_mission_requires_localisation(client):
    token = acquire(client)
    teach_edge_http(client, token, "DOCK", "A")
    r = client.post("/api/missions", json={"targets": ["A"]})
    assert r.status_code == 409


def test_mission_preview_does_not_change_state(client):
    token = acquire(client)
    prepare_taught(client, token)
    r = client.post("/api/missions/preview", json={"targets": ["B"]})
    assert r.status_code == 200
    plan = r.json()
    assert plan["route"][0] == "DOCK"
    assert plan["status"] == "planned"
    assert client.get("/api/missions").json()["active"] is None


def test_mission_dispatch_and_abort(client):
    token = acquire(client)
    prepare_taught(client, token)
    r = client.post("/api/missions", json={"targets": ["B"]})
    assert r.status_code == 200
    m = r.json()
    assert m["status"] == "running"
    for _ in range(20):
        client.svc.session.tick()
    r = client.post(f"/api/missions/{m['id']}/abort")
    assert r.status_code == 200
    assert r.json()["status"] == "aborted"
    assert client.svc.session.mode is Mode.IDLE


def test_abort_unknown_mission_is_404(client):
    r = client.post("/api/missions/99/abort")
    assert r.status_code == 404


def test_unreachable_target_is_a_client_error(client):
    token = acquire(client)
    teach_edge_http(client, token, "DOCK", "A")
    client.post("/api/localisation/init", json={"node": "DOCK", "heading": 0.0})
    r = client.post("/api/missions", json={"targets": ["B"]})  # edge untaught
    assert r.status_code == 409


# ---------------------------------------------------------------------------
# websocket telemetry


def test_websocket_streams_snapshots_and_events(client):
    with client.websocket_connect("/ws/telemetry") as ws:
        first = ws.receive_json()
        assert first["type"] == "snapshot"
        assert first["snapshot"]["mode"] == "IDLE"
        # the boot events arrive with the first frame
        kinds = [e["kind"] for e in first["events"]]
        assert "supergraph" in kinds

        client.post("/api/localisation/init",
                    json={"node": "A", "heading": 0.0})
        seen = []
        for _ in range(5):
            msg = ws.receive_json()
            seen += [e["kind"] for e in msg["events"]]
            if "localisation_init" in seen:
                break
        assert "localisation_init" in seen
