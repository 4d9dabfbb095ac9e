"""HTTP/WebSocket service wrapping a live Session.

The simulation loop stays single-threaded: a ticker thread owns the clock
and every HTTP handler takes the same lock before touching the session, so
commands are serialised between ticks and responses are snapshot copies.

Wire API (JSON bodies; schemas in docs/wire_api.md):

    GET  /api/status                     live snapshot + lease state
    POST /api/drive/acquire              single drive-control lease
    POST /api/drive/release
    POST /api/teleop                     absolute (v, w) setpoint
    POST /api/teach/start
    POST /api/teach/stop
    POST /api/localisation/init          place code + heading (or pose)
    GET  /api/missions                   active mission
    POST /api/missions                   dispatch
    POST /api/missions/preview
    POST /api/missions/{id}/abort
    GET  /api/map                        binary map container
    WS   /ws/telemetry                   10 Hz snapshots + event records
"""

from __future__ import annotations

import asyncio
import json
import secrets
import tempfile
import threading
import time

from fastapi import FastAPI, HTTPException, Response, WebSocket, WebSocketDisconnect
from pydantic import BaseModel, Field

from .expgraph import save as save_map
from .geometry import Pose2
from .mission import PlanningError
from .runtime import CommandError, Mode, Session
from .scenario import Scenario

TELEMETRY_HZ = 10.0
TELEOP_RATE_HZ = 20.0     # accepted command ceiling per lease
BIND_ENV_VAR = "GRASSNAV_BIND"


class AcquireBody(BaseModel):
    operator: str = Field(min_length=1, max_length=64)


class ReleaseBody(BaseModel):
    token: str


class TeleopBody(BaseModel):
    token: str
    v: float
    w: float


class TeachStartBody(BaseModel):
    token: str


class TeachStopBody(BaseModel):
    token: str
    start_node: str | None = None
    end_node: str | None = None


class LocInitBody(BaseModel):
    node: str | None = None
    heading: float = 0.0
    pose: list[float] | None = None  # [x, y, theta] overrides node


class MissionBody(BaseModel):
    targets: list[str]
    return_home: bool = True


class DriveLease:
    def __init__(self):
        self.holder: str | None = None
        self.token: str | None = None
        self.last_command: float = 0.0

    def acquire(self, operator: str) -> str:
        if self.holder is not None:
            raise HTTPException(status_code=409, detail={
                "error": "drive control is held", "holder": self.holder})
        self.holder = operator
        self.token = secrets.token_hex(8)
        self.last_command = 0.0
        return self.token

    def check(self, token: str) -> None:
        if self.token is None:
            raise HTTPException(status_code=409, detail={
                "error": "drive control not held", "holder": None})
        if token != self.token:
            raise HTTPException(status_code=403, detail={
                "error": "not the lease holder", "holder": self.holder})

    def release(self) -> None:
        self.holder = None
        self.token = None


class Service:
    """Session plus the shared-state plumbing the handlers need."""

    def __init__(self, scenario: Scenario, seed: int | None = None,
                 accel: float | None = None):
        self.session = Session(scenario, seed=seed, accel=accel)
        self.lock = threading.Lock()
        self.lease = DriveLease()
        self._log_offset = 0
        self._stop = threading.Event()
        self._thread: threading.Thread | None = None

    # -- ticker ------------------------------------------------------------

    def start_ticker(self) -> None:
        if self._thread is not None:
            return
        self._stop.clear()
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()

    def stop_ticker(self) -> None:
        self._stop.set()
        if self._thread is not None:
            self._thread.join(timeout=5.0)
            self._thread = None

    def _run(self) -> None:
        dt = self.session.dt
        next_t = time.monotonic()
        while not self._stop.is_set():
            with self.lock:
                self.session.tick()
            next_t += dt
            delay = next_t - time.monotonic()
            if delay > 0:
                time.sleep(delay)
            else:
                next_t = time.monotonic()  # fell behind; don't burst

    # -- telemetry fan-out ---------------------------------------------------

    def drain_events(self) -> list[dict]:
        """Event records appended to the log since the last drain."""
        text = self.session.log.getvalue()
        fresh, self._log_offset = text[self._log_offset:], len(text)
        out = []
        for line in fresh.splitlines():
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                continue
            if rec.get("type") == "event":
                out.append(rec)
        return out

    def status(self) -> dict:
        snap = self.session.snapshot()
        snap["drive_lease"] = {"holder": self.lease.holder}
        return snap


def create_app(scenario: Scenario, seed: int | None = None,
               accel: float | None = None, autostart: bool = True) -> FastAPI:
    svc = Service(scenario, seed=seed, accel=accel)
    app = FastAPI(title="grassnav", version="1.0")
    app.state.svc = svc

    if autostart:
        @app.on_event("startup")
        def _startup():
            svc.start_ticker()

        @app.on_event("shutdown")
        def _shutdown():
            svc.stop_ticker()

    def command(fn, *args, **kwargs):
        """Run a session command under the lock, mapping domain errors."""
        with svc.lock:
            try:
                return fn(*args, **kwargs)
            except (CommandError, PlanningError) as exc:
                raise HTTPException(status_code=409, detail=str(exc))

    # -- status / map --------------------------------------------------------

    @app.get("/api/status")
    def get_status():
        with svc.lock:
            return svc.status()

    @app.get("/api/map")
    def get_map():
        with tempfile.NamedTemporaryFile(suffix=".gnmap") as tmp:
            with svc.lock:
                save_map(svc.session.graph, tmp.name)
            data = tmp.read()
        return Response(content=data,
                        media_type="application/octet-stream")

    # -- drive lease / teleop --------------------------------------------------

    @app.post("/api/drive/acquire")
    def drive_acquire(body: AcquireBody):
        with svc.lock:
            token = svc.lease.acquire(body.operator)
            return {"token": token, "holder": body.operator}

    @app.post("/api/drive/release")
    def drive_release(body: ReleaseBody):
        with svc.lock:
            svc.lease.check(body.token)
            s = svc.session
            # lease lost mid-session: commands cease and a partial teach is
            # finalised server-side rather than left dangling
            if s.mode is Mode.TEACH:
                try:
                    s.stop_teach()
                except (CommandError, ValueError):
                    pass
            elif s.mode is Mode.TELEOP:
                s.stop_teleop()
            svc.lease.release()
            return {"released": True}

    @app.post("/api/teleop")
    def teleop(body: TeleopBody):
        with svc.lock:
            svc.lease.check(body.token)
            now = time.monotonic()
            if now - svc.lease.last_command < 1.0 / TELEOP_RATE_HZ:
                raise HTTPException(status_code=429,
                                    detail="teleop rate limit exceeded")
            svc.lease.last_command = now
            s = svc.session
            try:
                if s.mode in (Mode.IDLE, Mode.CHARGING):
                    s.start_teleop()
                s.teleop(body.v, body.w)
            except CommandError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return {"accepted": True, "speed_limit": s._speed_limit}

    # -- teach -----------------------------------------------------------------

    @app.post("/api/teach/start")
    def teach_start(body: TeachStartBody):
        with svc.lock:
            svc.lease.check(body.token)
        command(svc.session.start_teach)
        return {"teaching": True}

    @app.post("/api/teach/stop")
    def teach_stop(body: TeachStopBody):
        with svc.lock:
            svc.lease.check(body.token)
        path = command(svc.session.stop_teach, body.start_node, body.end_node)
        return {"experience": path.experience_id,
                "keyframes": len(path.keyframe_ids),
                "length": path.length}

    # -- localisation ------------------------------------------------------------

    @app.post("/api/localisation/init")
    def loc_init(body: LocInitBody):
        pose = Pose2(*body.pose) if body.pose is not None else None
        command(svc.session.init_localisation, pose=pose, node=body.node,
                heading=body.heading)
        return {"initialised": True}

    # -- missions ---------------------------------------------------------------

    def mission_json(m) -> dict:
        return {"id": m.id, "status": m.status.value, "targets": m.targets,
                "route": m.route, "length": m.length,
                "energy_estimate": m.energy_estimate,
                "captured": sorted(m.captured), "truncated": m.truncated}

    @app.get("/api/missions")
    def get_missions():
        with svc.lock:
            m = svc.session._mission
            return {"active": mission_json(m) if m is not None else None}

    @app.post("/api/missions")
    def post_mission(body: MissionBody):
        m = command(svc.session.dispatch_mission, body.targets,
                    return_home=body.return_home)
        return mission_json(m)

    @app.post("/api/missions/preview")
    def preview(body: MissionBody):
        m = command(svc.session.preview_mission, body.targets)
        return mission_json(m)

    @app.post("/api/missions/{mission_id}/abort")
    def abort(mission_id: int):
        with svc.lock:
            m = svc.session._mission
            if m is None or m.id != mission_id:
                raise HTTPException(status_code=404,
                                    detail=f"no active mission {mission_id}")
            try:
                svc.session.abort_mission()
            except CommandError as exc:
                raise HTTPException(status_code=409, detail=str(exc))
            return mission_json(m)

    # -- telemetry stream ---------------------------------------------------------

    @app.websocket("/ws/telemetry")
    async def ws_telemetry(ws: WebSocket):
        await ws.accept()
        try:
            while True:
                with svc.lock:
                    payload = {"type": "snapshot", "snapshot": svc.status(),
                               "events": svc.drain_events()}
                await ws.send_text(json.dumps(payload))
                await asyncio.sleep(1.0 / TELEMETRY_HZ)
        except WebSocketDisconnect:
            pass

    return app
