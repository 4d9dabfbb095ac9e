"""Command-line entry points.

The CLI stays thin: `run` and `stats` call the library, `serve` hosts the
HTTP service, `map` does container maintenance and `replay` plays a
recorded log back. Anything interactive goes through the service API.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from .expgraph import GraphError, load as load_map, save as save_map
from .scenario import Scenario
from .service import BIND_ENV_VAR, create_app
from .telemetry import parse_log, per_day_csv, runs_csv, stats as aggregate, timing_csv

DEFAULT_BIND = "127.0.0.1:8000"


def _load_scenario(path: str) -> Scenario:
    try:
        return Scenario.load(path)
    except Exception as exc:
        raise click.ClickException(str(exc))


@click.group()
def main():
    """Grassland teach-and-repeat navigation stack."""


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None)
@click.option("--duration", type=float, default=None,
              help="Simulated seconds; omit to run the scenario's campaign.")
@click.option("--accel", type=float, default=None,
              help="Appearance-decay acceleration factor.")
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def run(scenario_path, seed, duration, accel, out_dir):
    """Run a scenario headless and write its log and report."""
    from .runtime import run_scenario

    sc = _load_scenario(scenario_path)
    session, report = run_scenario(sc, duration_s=duration, seed=seed,
                                   accel=accel)
    doc = report.to_dict()
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "telemetry.ndjson").write_text(session.log.getvalue(),
                                             encoding="utf-8")
        (out / "report.json").write_text(json.dumps(doc, indent=2) + "\n",
                                         encoding="utf-8")
        (out / "runs.csv").write_text(runs_csv(report), encoding="utf-8")
        (out / "per_day.csv").write_text(per_day_csv(report), encoding="utf-8")
        click.echo(f"wrote {out}/telemetry.ndjson and report files")
    else:
        click.echo(json.dumps(doc, indent=2))


@main.command("stats")
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_dir", type=click.Path(file_okay=False), default=None)
def stats_cmd(log_path, out_dir):
    """Aggregate a telemetry log into a campaign report."""
    from .telemetry import TelemetryError

    try:
        records = parse_log(Path(log_path).read_text(encoding="utf-8"))
        report = aggregate(records)
    except TelemetryError as exc:
        raise click.ClickException(str(exc))
    if out_dir:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(
            json.dumps(report.to_dict(), indent=2) + "\n", encoding="utf-8")
        (out / "runs.csv").write_text(runs_csv(report), encoding="utf-8")
        (out / "per_day.csv").write_text(per_day_csv(report), encoding="utf-8")
        (out / "timing.csv").write_text(timing_csv(records), encoding="utf-8")
        click.echo(f"wrote report files to {out}")
    else:
        click.echo(json.dumps(report.to_dict(), indent=2))


@main.command()
@click.option("--scenario", "scenario_path", required=True, type=click.Path(exists=True))
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), default=None)
@click.option("--accel", type=float, default=None)
@click.option("--bind", default=None,
              help=f"host:port (default ${BIND_ENV_VAR} or {DEFAULT_BIND})")
def serve(scenario_path, seed, accel, bind):
    """Host the console backend for a live scenario."""
    import uvicorn

    sc = _load_scenario(scenario_path)
    bind = bind or os.environ.get(BIND_ENV_VAR, DEFAULT_BIND)
    host, _, port = bind.partition(":")
    app = create_app(sc, seed=seed, accel=accel)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port or 8000))


@main.group("map")
def map_group():
    """Experience-map container maintenance."""


@map_group.command()
@click.argument("map_path", type=click.Path(exists=True, dir_okay=False))
def audit(map_path):
    """Check container integrity and graph invariants."""
    try:
        graph = load_map(map_path)
    except Exception as exc:
        raise click.ClickException(str(exc))
    problems = graph.audit()
    stats = {"keyframes": len(graph.keyframes), "edges": len(graph.edges),
             "experiences": len(graph.experiences),
             "active_edges": len(graph.active_experience)}
    click.echo(json.dumps({"stats": stats, "problems": problems}, indent=2))
    if problems:
        sys.exit(1)


@map_group.command()
@click.argument("map_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--experience", "experience_id", type=int, required=True)
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Write to a new file instead of in place.")
def purge(map_path, experience_id, out_path):
    """Drop a retired experience and its keyframes from a map."""
    try:
        graph = load_map(map_path)
        graph.purge_experience(experience_id)
    except (GraphError, Exception) as exc:
        raise click.ClickException(str(exc))
    save_map(graph, out_path or map_path)
    click.echo(f"purged experience {experience_id}")


@main.command()
@click.argument("log_path", type=click.Path(exists=True, dir_okay=False))
@click.option("--speed", type=float, default=0.0,
              help="Playback speed multiple of real time (0 = no delay).")
@click.option("--out", "out_path", type=click.Path(dir_okay=False), default=None,
              help="Also write the trace as CSV.")
def replay(log_path, speed, out_path):
    """Play back the drive trace from a telemetry log."""
    records = parse_log(Path(log_path).read_text(encoding="utf-8"))
    ticks = [r for r in records if r.get("type") == "tick"]
    rows = ["t,x,y,theta,mode,battery,odometer"]
    prev_t = None
    for rec in ticks:
        x, y, th = rec.get("truth", [float("nan")] * 3)
        line = (f"{rec['t']:9.1f}  ({x:8.2f}, {y:8.2f}, {th:6.2f})  "
                f"{rec.get('mode', '?'):8s}  "
                f"bat {rec.get('battery', 0.0):9.0f} J  "
                f"odo {rec.get('odometer', 0.0):8.1f} m")
        click.echo(line)
        rows.append(f"{rec['t']},{x},{y},{th},{rec.get('mode', '')},"
                    f"{rec.get('battery', '')},{rec.get('odometer', '')}")
        if speed > 0 and prev_t is not None:
            time.sleep(max(rec["t"] - prev_t, 0.0) / speed)
        prev_t = rec["t"]
    if out_path:
        Path(out_path).write_text("\n".join(rows) + "\n", encoding="utf-8")
        click.echo(f"wrote {out_path}")


if __name__ == "__main__":
    main()
