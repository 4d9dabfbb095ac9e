"""Telemetry logging and campaign statistics.

The event log is newline-delimited JSON: one header record, then `tick`
and `event` records with monotone timestamps. Reports are derived from the
event records alone, so an independent re-aggregation of the same log must
reproduce every report field exactly.

Timestamps are in motion-clock seconds (controller time). Under time
acceleration only the appearance-decay clock runs faster; day bucketing
therefore maps motion time through the acceleration factor recorded in the
header.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

SCHEMA_VERSION = 1
AUTONOMOUS_MODES = ("REPEAT", "DOCKING")
SHORT_RUN_S = 15.0 * 60.0     # runs shorter than this are flagged "short"
ABORTED_RUN_M = 10.0          # distance entries below this are flagged "aborted"
DAY_S = 86400.0


class TelemetryError(Exception):
    pass


def _dumps(obj: dict) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


class TelemetryLog:
    """Append-only NDJSON writer with monotone-stamp enforcement."""

    def __init__(self, stream=None):
        self.stream = stream if stream is not None else io.StringIO()
        self._last_t: float | None = None
        self._wrote_header = False

    def header(self, scenario: str, seed: int, accel: float, dt: float) -> None:
        if self._wrote_header:
            raise TelemetryError("header already written")
        self._wrote_header = True
        self.stream.write(_dumps({"type": "header", "schema": SCHEMA_VERSION,
                                  "scenario": scenario, "seed": seed,
                                  "accel": accel, "dt": dt}) + "\n")

    def _stamp(self, t: float) -> None:
        if self._last_t is not None and t < self._last_t:
            raise TelemetryError(f"stamp {t} precedes {self._last_t}")
        self._last_t = t

    def tick(self, t: float, **fields) -> None:
        self._stamp(t)
        self.stream.write(_dumps({"type": "tick", "t": t, **fields}) + "\n")

    def event(self, t: float, kind: str, **fields) -> None:
        self._stamp(t)
        self.stream.write(_dumps({"type": "event", "t": t, "kind": kind,
                                  **fields}) + "\n")

    def getvalue(self) -> str:
        if isinstance(self.stream, io.StringIO):
            return self.stream.getvalue()
        raise TelemetryError("log not held in memory")


def parse_log(text: str) -> list[dict]:
    records = []
    for i, line in enumerate(text.splitlines()):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            raise TelemetryError(f"line {i + 1}: invalid JSON: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# aggregation

@dataclass
class RunEntry:
    start: float
    end: float
    metres: float

    @property
    def duration_s(self) -> float:
        return self.end - self.start

    @property
    def short(self) -> bool:
        return self.duration_s < SHORT_RUN_S

    @property
    def aborted(self) -> bool:
        return self.metres < ABORTED_RUN_M

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end,
                "duration_s": self.duration_s, "metres": self.metres,
                "short": self.short, "aborted": self.aborted}


@dataclass
class EdgeStats:
    ok: int = 0
    lost: int = 0
    aborted: int = 0
    metres: float = 0.0
    retaught: int = 0

    def to_dict(self) -> dict:
        return {"ok": self.ok, "lost": self.lost, "aborted": self.aborted,
                "metres": self.metres, "retaught": self.retaught}


@dataclass
class CampaignReport:
    per_day_autonomous_s: dict[int, float] = field(default_factory=dict)
    per_day_metres: dict[int, float] = field(default_factory=dict)
    runs: list[RunEntry] = field(default_factory=list)
    per_edge: dict[str, EdgeStats] = field(default_factory=dict)
    reteach_events: list[dict] = field(default_factory=list)
    captures: int = 0
    missions_completed: int = 0
    missions_truncated: int = 0
    cumulative_autonomous_m: float = 0.0
    edges_total: int = 0

    @property
    def edges_retaught(self) -> int:
        return sum(1 for e in self.per_edge.values() if e.retaught > 0)

    @property
    def fraction_never_retaught(self) -> float:
        if self.edges_total == 0:
            return 0.0
        return 1.0 - self.edges_retaught / self.edges_total

    def to_dict(self) -> dict:
        return {
            "per_day_autonomous_s": {str(k): v for k, v
                                     in sorted(self.per_day_autonomous_s.items())},
            "per_day_metres": {str(k): v for k, v
                               in sorted(self.per_day_metres.items())},
            "runs": [r.to_dict() for r in self.runs],
            "per_edge": {k: v.to_dict() for k, v in sorted(self.per_edge.items())},
            "reteach_events": self.reteach_events,
            "captures": self.captures,
            "missions_completed": self.missions_completed,
            "missions_truncated": self.missions_truncated,
            "cumulative_autonomous_m": self.cumulative_autonomous_m,
            "edges_total": self.edges_total,
            "edges_retaught": self.edges_retaught,
            "fraction_never_retaught": self.fraction_never_retaught,
        }


def stats(records: list[dict]) -> CampaignReport:
    """Aggregate an event log into a CampaignReport.

    Only `event` records contribute; tick records may be decimated without
    changing the report. Raises on out-of-order stamps.
    """
    accel = 1.0
    last_t = None
    report = CampaignReport()
    mode = "IDLE"
    run_start = None
    run_start_odo = None

    def day_of(t: float) -> int:
        return int(t * accel // DAY_S)

    def close_run(t: float, odo: float) -> None:
        nonlocal run_start, run_start_odo
        if run_start is None:
            return
        entry = RunEntry(run_start, t, odo - run_start_odo)
        report.runs.append(entry)
        d = day_of(run_start)
        report.per_day_autonomous_s[d] = (report.per_day_autonomous_s.get(d, 0.0)
                                          + entry.duration_s)
        run_start = None
        run_start_odo = None

    for rec in records:
        if rec.get("type") == "header":
            accel = float(rec.get("accel", 1.0))
            continue
        t = rec.get("t")
        if last_t is not None and t < last_t:
            raise TelemetryError(f"out-of-order stamp {t} after {last_t}")
        last_t = t
        if rec.get("type") != "event":
            continue
        kind = rec["kind"]
        if kind == "mode":
            new = rec["to"]
            odo = rec["odometer"]
            was_auto = mode in AUTONOMOUS_MODES
            is_auto = new in AUTONOMOUS_MODES
            if is_auto and not was_auto:
                run_start, run_start_odo = t, odo
            elif was_auto and not is_auto:
                close_run(t, odo)
            mode = new
        elif kind == "supergraph":
            report.edges_total = int(rec["edges"])
        elif kind == "edge_done":
            st = report.per_edge.setdefault(rec["edge"], EdgeStats())
            outcome = rec["outcome"]
            if outcome == "ok":
                st.ok += 1
            elif outcome == "aborted":
                st.aborted += 1
            if rec.get("lost"):
                st.lost += 1
            st.metres += float(rec["metres"])
            report.cumulative_autonomous_m += float(rec["metres"])
            d = day_of(t)
            report.per_day_metres[d] = (report.per_day_metres.get(d, 0.0)
                                        + float(rec["metres"]))
        elif kind == "reteach":
            st = report.per_edge.setdefault(rec["edge"], EdgeStats())
            st.retaught += 1
            report.reteach_events.append({"t": t, "edge": rec["edge"]})
        elif kind == "capture":
            report.captures += 1
        elif kind == "mission_done":
            if rec.get("status", "completed") == "completed":
                report.missions_completed += 1
            if rec.get("truncated"):
                report.missions_truncated += 1
        elif kind == "end":
            close_run(t, rec["odometer"])
    return report


# ---------------------------------------------------------------------------
# CSV exports

def runs_csv(report: CampaignReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["start_s", "end_s", "duration_s", "metres", "short", "aborted"])
    for r in report.runs:
        w.writerow([f"{r.start:.3f}", f"{r.end:.3f}", f"{r.duration_s:.3f}",
                    f"{r.metres:.3f}", int(r.short), int(r.aborted)])
    return out.getvalue()


def per_day_csv(report: CampaignReport) -> str:
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["day", "autonomous_s", "metres"])
    days = sorted(set(report.per_day_autonomous_s) | set(report.per_day_metres))
    for d in days:
        w.writerow([d, f"{report.per_day_autonomous_s.get(d, 0.0):.3f}",
                    f"{report.per_day_metres.get(d, 0.0):.3f}"])
    return out.getvalue()


def timing_csv(records: list[dict]) -> str:
    """Mode-interval table: one row per contiguous mode span."""
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["mode", "start_s", "end_s"])
    mode = "IDLE"
    start = 0.0
    last_t = 0.0
    for rec in records:
        if rec.get("type") == "event" and rec.get("kind") == "mode":
            w.writerow([mode, f"{start:.3f}", f"{rec['t']:.3f}"])
            mode = rec["to"]
            start = rec["t"]
        if "t" in rec:
            last_t = rec["t"]
    w.writerow([mode, f"{start:.3f}", f"{last_t:.3f}"])
    return out.getvalue()
