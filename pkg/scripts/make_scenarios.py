#!/usr/bin/env python3
"""Generate the shipped scenario files under scenarios/.

Run from the repository root:

    python3 scripts/make_scenarios.py

Four scenarios are produced:

* default.json    -- small 4-node patch with a dock; quick demos and the
                     service/CLI happy path.
* tight_turn.json -- open meadow used by the controller comparison tests;
                     the route itself is scripted by the caller.
* docking.json    -- dock plus lidar only; used for docking trials.
* campaign75.json -- 5x8 survey grid (75 edges) with volatile vegetation
                     zones for the accelerated six-week campaign.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "scenarios"

# A panoramic camera is assumed throughout: route edges are repeated in
# both directions, and a forward-only view shares no landmarks with the
# taught keyframes near the far end of a reversed leg.
CAMERA = {"fov_deg": 360.0, "range_m": 8.0}


def dock_block(position, heading):
    return {"position": list(position), "heading": heading}


def dock_node_position(position, heading, runway_length=2.0, docked_offset=0.35):
    """World position of the runway entry, where the nav graph meets the dock."""
    r = runway_length + docked_offset
    return [position[0] + r * math.cos(heading), position[1] + r * math.sin(heading)]


def default_scenario():
    dock = [-5.0, 0.0]
    node_dock = dock_node_position(dock, 0.0)
    return {
        "name": "default",
        "seed": 7,
        "dt": 0.1,
        "world": {
            "bounds": [-10.0, -12.0, 40.0, 24.0],
            "plots": [
                {"id": "Q1", "position": [12.0, 0.0]},
                {"id": "Q2", "position": [26.0, 0.0]},
                {"id": "Q3", "position": [26.0, 14.0]},
            ],
            "landmark_zones": [
                {"region": [-8.0, -10.0, 38.0, 22.0], "count": 2600,
                 "half_life_s": 1e12, "regenerate": False},
                {"region": [16.0, -10.0, 38.0, 8.0], "count": 900,
                 "half_life_s": 1209600.0, "regenerate": True},
            ],
            "dock": dock_block(dock, 0.0),
        },
        "robot": {"start_pose": [node_dock[0], node_dock[1], 0.0]},
        "camera": dict(CAMERA),
        "supergraph": {
            "dock_node": "DOCK",
            "nodes": {
                "DOCK": {"position": node_dock, "plot": None},
                "P1": {"position": [12.0, 0.0], "plot": "Q1"},
                "P2": {"position": [26.0, 0.0], "plot": "Q2"},
                "P3": {"position": [26.0, 14.0], "plot": "Q3"},
            },
            "edges": [["DOCK", "P1"], ["P1", "P2"], ["P2", "P3"]],
        },
        "telemetry": {"every_n_ticks": 5},
    }


def tight_turn_scenario():
    return {
        "name": "tight_turn",
        "seed": 11,
        "dt": 0.1,
        "world": {
            "bounds": [-15.0, -15.0, 25.0, 25.0],
            "landmark_zones": [
                {"region": [-14.0, -14.0, 24.0, 24.0], "count": 2400,
                 "half_life_s": 1e12, "regenerate": False},
            ],
        },
        "robot": {"start_pose": [0.0, 0.0, 0.0]},
        "camera": dict(CAMERA),
    }


def docking_scenario():
    return {
        "name": "docking",
        "seed": 3,
        "dt": 0.05,
        "world": {
            "bounds": [-12.0, -12.0, 12.0, 12.0],
            "dock": dock_block([0.0, 0.0], 0.0),
        },
        "robot": {"start_pose": [3.0, 0.0, math.pi]},
        "lidar": {"beams": 360, "fov_deg": 270.0, "max_range": 10.0,
                  "range_noise": 0.005},
    }


def campaign75_scenario():
    cols, rows, pitch = 8, 5, 12.0
    x0, y0 = 0.0, 0.0

    nodes = {}
    plots = []
    for r in range(rows):
        for c in range(cols):
            code = f"P{r}{c}"
            pos = [x0 + c * pitch, y0 + r * pitch]
            nodes[code] = {"position": pos, "plot": code}
            plots.append({"id": code, "position": pos})

    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append([f"P{r}{c}", f"P{r}{c + 1}"])
            if r + 1 < rows:
                edges.append([f"P{r}{c}", f"P{r + 1}{c}"])
    # 67 grid edges; 8 diagonals bring the route network to 75.
    for r, c in [(0, 0), (0, 2), (1, 4), (1, 6), (2, 1), (2, 5), (3, 3), (3, 6)]:
        edges.append([f"P{r}{c}", f"P{r + 1}{c + 1}"])
    assert len(edges) == 75, len(edges)

    dock = [-8.0, 0.0]
    node_dock = dock_node_position(dock, 0.0)
    nodes["DOCK"] = {"position": node_dock, "plot": None}
    edges.append(["DOCK", "P00"])

    xmax = x0 + (cols - 1) * pitch
    ymax = y0 + (rows - 1) * pitch
    margin = 10.0
    bounds = [dock[0] - 4.0, y0 - margin, xmax + margin, ymax + margin]
    area_density = 0.30  # landmarks per square metre

    def zone(region, volatile):
        area = (region[2] - region[0]) * (region[3] - region[1])
        return {
            "region": [float(v) for v in region],
            "count": int(round(area * area_density)),
            "half_life_s": 1209600.0 if volatile else 1e12,  # 14 days
            "regenerate": volatile,
        }

    # Vegetation mosaic: the eastern strip and a central band regrow fast
    # and force re-teaching; the rest of the meadow is stable scatter.
    volatile_regions = [
        [52.0, y0 - margin, xmax + margin, ymax + margin],   # east strip
        [bounds[0], 14.0, 52.0, 34.0],                       # central band
    ]
    stable_regions = [
        [bounds[0], bounds[1], 52.0, 14.0],
        [bounds[0], 34.0, 52.0, bounds[3]],
        [bounds[0], 14.0, 52.0, 34.0],  # thin stable scatter under the band
    ]
    zones = [zone(r, True) for r in volatile_regions]
    zones += [zone(r, False) for r in stable_regions[:2]]
    # Under the volatile band keep a sparse stable layer so the robot can
    # still localise (poorly) after regrowth, instead of going blind.
    band = stable_regions[2]
    thin = zone(band, False)
    thin["count"] = int(thin["count"] * 0.25)
    zones.append(thin)

    return {
        "name": "campaign75",
        "seed": 20260826,
        "dt": 0.1,
        "world": {
            "bounds": bounds,
            "plots": plots,
            "landmark_zones": zones,
            "dock": dock_block(dock, 0.0),
        },
        "robot": {"start_pose": [node_dock[0], node_dock[1], 0.0]},
        "camera": dict(CAMERA),
        "lidar": {"beams": 180, "fov_deg": 270.0, "max_range": 10.0},
        "supergraph": {"dock_node": "DOCK", "nodes": nodes, "edges": edges},
        "campaign": {"days": 42, "accel": 100.0, "targets_per_day": 8,
                     "reteach": True},
        "telemetry": {"every_n_ticks": 10},
    }


def main():
    OUT.mkdir(exist_ok=True)
    for build in (default_scenario, tight_turn_scenario, docking_scenario,
                  campaign75_scenario):
        doc = build()
        path = OUT / f"{doc['name']}.json"
        path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
