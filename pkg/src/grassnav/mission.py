"""Supergraph mission planning and execution.

The supergraph is the coarse place-level graph over the plot sites; its
edges reference taught experiences. Tours over target places are exact
(Held-Karp) up to 12 targets and nearest-neighbour + 2-opt beyond that.
The executor walks the planned edge sequence, emits capture events at
targets, truncates to a return-to-dock leg when the battery reserve gets
thin, and hands over to docking at the dock node.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import json
import math
from dataclasses import dataclass, field

from .scenario import BatteryConfig, MissionConfig, SupergraphConfig


class PlanningError(Exception):
    pass


def edge_ref(a: str, b: str) -> str:
    return "|".join(sorted((a, b)))


@dataclass
class SuperEdge:
    a: str
    b: str
    length: float
    experiences: list[int] = field(default_factory=list)

    @property
    def ref(self) -> str:
        return edge_ref(self.a, self.b)


class Supergraph:
    def __init__(self, dock_node: str):
        self.dock_node = dock_node
        self.nodes: dict[str, tuple[float, float]] = {}
        self.node_plots: dict[str, str] = {}
        self.edges: dict[str, SuperEdge] = {}
        self.adjacency: dict[str, list[tuple[str, float, str]]] = {}

    @staticmethod
    def from_config(cfg: SupergraphConfig) -> "Supergraph":
        g = Supergraph(cfg.dock_node)
        g.nodes = dict(cfg.nodes)
        g.node_plots = dict(cfg.node_plots)
        for a, b in cfg.edges:
            xa, ya = cfg.nodes[a]
            xb, yb = cfg.nodes[b]
            g.add_edge(a, b, math.hypot(xb - xa, yb - ya))
        return g

    def add_node(self, code: str, position: tuple[float, float],
                 plot: str | None = None) -> None:
        self.nodes[code] = position
        if plot:
            self.node_plots[code] = plot

    def add_edge(self, a: str, b: str, length: float) -> SuperEdge:
        if length <= 0:
            raise PlanningError(f"edge {a}-{b}: length must be > 0")
        if a not in self.nodes or b not in self.nodes:
            raise PlanningError(f"edge {a}-{b}: unknown node")
        e = SuperEdge(*sorted((a, b)), length=length)
        self.edges[e.ref] = e
        self.adjacency.setdefault(a, []).append((b, length, e.ref))
        self.adjacency.setdefault(b, []).append((a, length, e.ref))
        self.adjacency[a].sort()
        self.adjacency[b].sort()
        return e

    def connected_from_dock(self) -> bool:
        seen = {self.dock_node}
        stack = [self.dock_node]
        while stack:
            n = stack.pop()
            for m, _, _ in self.adjacency.get(n, []):
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen >= set(self.nodes)

    # -- persistence (JSON external interface) ------------------------------

    def to_dict(self) -> dict:
        return {
            "dock_node": self.dock_node,
            "nodes": {c: {"position": list(p),
                          "plot": self.node_plots.get(c)}
                      for c, p in sorted(self.nodes.items())},
            "edges": [{"a": e.a, "b": e.b, "length": e.length,
                       "experiences": list(e.experiences)}
                      for _, e in sorted(self.edges.items())],
        }

    @staticmethod
    def from_dict(d: dict) -> "Supergraph":
        g = Supergraph(d["dock_node"])
        for c, nd in d["nodes"].items():
            g.add_node(c, tuple(nd["position"]), nd.get("plot"))
        for ed in d["edges"]:
            e = g.add_edge(ed["a"], ed["b"], ed["length"])
            e.experiences = list(ed.get("experiences", []))
        return g

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    @staticmethod
    def load(path: str) -> "Supergraph":
        with open(path, "r", encoding="utf-8") as f:
            return Supergraph.from_dict(json.load(f))


# ---------------------------------------------------------------------------
# routing

def shortest_path(g: Supergraph, a: str, b: str) -> tuple[list[str], float]:
    """Dijkstra; equal-length ties break to the lexicographically smaller
    node-code sequence."""
    if a not in g.nodes or b not in g.nodes:
        raise PlanningError(f"unknown node {a if a not in g.nodes else b!r}")
    if a == b:
        return [a], 0.0
    heap: list[tuple[float, tuple[str, ...]]] = [(0.0, (a,))]
    best: dict[str, tuple[float, tuple[str, ...]]] = {}
    while heap:
        dist, path = heapq.heappop(heap)
        node = path[-1]
        if node in best and (dist, path) > best[node]:
            continue
        if node == b:
            return list(path), dist
        for nbr, length, _ in g.adjacency.get(node, []):
            cand = (dist + length, path + (nbr,))
            if nbr not in best or cand < best[nbr]:
                best[nbr] = cand
                heapq.heappush(heap, cand)
    raise PlanningError(f"no path from {a!r} to {b!r}")


def all_dock_distances(g: Supergraph) -> dict[str, float]:
    """Shortest distance from every node to the dock node."""
    dist = {g.dock_node: 0.0}
    heap = [(0.0, g.dock_node)]
    while heap:
        d, n = heapq.heappop(heap)
        if d > dist.get(n, math.inf):
            continue
        for m, length, _ in g.adjacency.get(n, []):
            nd = d + length
            if nd < dist.get(m, math.inf):
                dist[m] = nd
                heapq.heappush(heap, (nd, m))
    return dist


def _held_karp(dm: dict[tuple[str, str], float], start: str,
               targets: list[str]) -> list[str]:
    """Exact open tour from start through all targets."""
    n = len(targets)
    index = {c: i for i, c in enumerate(targets)}
    full = (1 << n) - 1
    # dp[(mask, j)] = (cost, prev_mask_j)
    dp: dict[tuple[int, int], tuple[float, int | None]] = {}
    for j, c in enumerate(targets):
        dp[(1 << j, j)] = (dm[(start, c)], None)
    for mask in range(1, full + 1):
        for j in range(n):
            if not mask & (1 << j) or (mask, j) not in dp:
                continue
            cost, _ = dp[(mask, j)]
            for k in range(n):
                if mask & (1 << k):
                    continue
                nm = mask | (1 << k)
                nc = cost + dm[(targets[j], targets[k])]
                cur = dp.get((nm, k))
                if cur is None or nc < cur[0]:
                    dp[(nm, k)] = (nc, j)
    end = min(range(n), key=lambda j: (dp[(full, j)][0], targets[j]))
    order = [end]
    mask = full
    while True:
        _, prev = dp[(mask, order[-1])]
        if prev is None:
            break
        mask ^= 1 << order[-1]
        order.append(prev)
    return [targets[j] for j in reversed(order)]


def _tour_length(dm, start: str, tour: list[str]) -> float:
    total = 0.0
    prev = start
    for c in tour:
        total += dm[(prev, c)]
        prev = c
    return total


def _nearest_neighbour(dm, start: str, targets: list[str]) -> list[str]:
    remaining = sorted(targets)
    tour = []
    cur = start
    while remaining:
        nxt = min(remaining, key=lambda c: (dm[(cur, c)], c))
        tour.append(nxt)
        remaining.remove(nxt)
        cur = nxt
    return tour


def _two_opt(dm, start: str, tour: list[str]) -> list[str]:
    improved = True
    tour = list(tour)
    while improved:
        improved = False
        for i in range(len(tour) - 1):
            for j in range(i + 1, len(tour)):
                cand = tour[:i] + tour[i:j + 1][::-1] + tour[j + 1:]
                if _tour_length(dm, start, cand) < _tour_length(dm, start, tour) - 1e-12:
                    tour = cand
                    improved = True
    return tour


class MissionStatus(enum.Enum):
    PLANNED = "planned"
    RUNNING = "running"
    PAUSED = "paused"
    COMPLETED = "completed"
    ABORTED = "aborted"


@dataclass
class Mission:
    id: int
    targets: list[str]
    tour: list[str]              # visit order, excluding the start node
    route: list[str]             # full node walk realising the tour
    length: float
    energy_estimate: float
    status: MissionStatus = MissionStatus.PLANNED
    captured: dict[str, float] = field(default_factory=dict)
    resume_index: int | None = None
    truncated: bool = False


def worst_case_per_metre(bat: BatteryConfig, v_nominal: float) -> float:
    """Conservative energy per metre: assumes half-nominal average speed."""
    return bat.k_v + bat.idle_w / max(0.5 * v_nominal, 1e-6) + 0.3 * bat.k_w


def plan_tour(g: Supergraph, start: str, targets: list[str],
              bat: BatteryConfig | None = None, v_nominal: float = 0.8,
              mission_id: int = 0) -> Mission:
    """TSP tour over targets, open-ended (dock return is battery logic)."""
    targets = sorted(set(targets))
    if start in targets:
        targets.remove(start)
    dm: dict[tuple[str, str], float] = {}
    paths: dict[tuple[str, str], list[str]] = {}
    everyone = [start] + targets
    for a in everyone:
        for b in everyone:
            if a == b:
                continue
            try:
                p, d = shortest_path(g, a, b)
            except PlanningError:
                raise PlanningError(f"target {b!r} unreachable from {a!r}")
            dm[(a, b)] = d
            paths[(a, b)] = p
    if not targets:
        tour: list[str] = []
    elif len(targets) <= 12:
        tour = _held_karp(dm, start, targets)
    else:
        tour = _two_opt(dm, start, _nearest_neighbour(dm, start, targets))
    route = [start]
    prev = start
    for c in tour:
        route.extend(paths[(prev, c)][1:])
        prev = c
    length = _tour_length(dm, start, tour)
    per_m = worst_case_per_metre(bat, v_nominal) if bat else 0.0
    return Mission(mission_id, targets, tour, route, length,
                   energy_estimate=length * per_m)


# ---------------------------------------------------------------------------
# execution

class DirectiveKind(enum.Enum):
    FOLLOW_EDGE = "follow_edge"
    CAPTURE = "capture"
    DOCK = "dock"
    COMPLETE = "complete"
    ABORT = "abort"


@dataclass
class Directive:
    kind: DirectiveKind
    edge: tuple[str, str] | None = None   # (from, to)
    node: str | None = None


class MissionExecutor:
    """Drives a planned mission edge by edge.

    The orchestrator asks for the next directive whenever the current one
    completes, and calls `check_battery` every tick with the remaining
    length of the active edge.
    """

    def __init__(self, g: Supergraph, mission: Mission, mission_cfg: MissionConfig,
                 bat: BatteryConfig, v_nominal: float):
        self.g = g
        self.mission = mission
        self.cfg = mission_cfg
        self.bat = bat
        self.v_nominal = v_nominal
        self.legs = list(zip(mission.route, mission.route[1:]))
        self.idx = 0
        self.dock_dist = all_dock_distances(g)
        self.returning = False
        self._capture_pending = self._captures_by_node()

    def _captures_by_node(self) -> dict[str, bool]:
        return {t: True for t in self.mission.targets}

    def remaining_after_current(self) -> float:
        return sum(self.g.edges[edge_ref(a, b)].length
                   for a, b in self.legs[self.idx + 1:])

    def start(self) -> None:
        self.mission.status = MissionStatus.RUNNING

    def current_leg(self) -> tuple[str, str] | None:
        if self.idx < len(self.legs):
            return self.legs[self.idx]
        return None

    def next_directive(self) -> Directive:
        """Directive for the current position in the route."""
        if self.mission.status is MissionStatus.ABORTED:
            return Directive(DirectiveKind.ABORT)
        leg = self.current_leg()
        if leg is None:
            node = self.mission.route[-1] if self.mission.route else self.g.dock_node
            if self.returning or node == self.g.dock_node:
                return Directive(DirectiveKind.DOCK, node=node)
            self.mission.status = MissionStatus.COMPLETED
            return Directive(DirectiveKind.COMPLETE, node=node)
        return Directive(DirectiveKind.FOLLOW_EDGE, edge=leg)

    def arrive(self, node: str, t: float) -> list[Directive]:
        """Called when the robot reaches the end of the current leg."""
        out = []
        if self._capture_pending.pop(node, False):
            self.mission.captured[node] = t
            out.append(Directive(DirectiveKind.CAPTURE, node=node))
        self.idx += 1
        return out

    def abort(self, resume: bool = True) -> None:
        self.mission.status = MissionStatus.ABORTED
        if resume:
            self.mission.resume_index = self.idx

    def check_battery(self, battery_j: float, remaining_current_edge: float) -> bool:
        """True when the mission must truncate and return to dock now."""
        if self.returning or self.current_leg() is None:
            return False
        end_node = self.mission.route[-1]
        need_m = (remaining_current_edge + self.remaining_after_current()
                  + self.dock_dist.get(end_node, math.inf))
        per_m = worst_case_per_metre(self.bat, self.v_nominal)
        return battery_j < self.cfg.margin * per_m * need_m

    def truncate_to_dock(self) -> None:
        """Replace the remaining route with a return leg from the current
        edge's end node."""
        leg = self.current_leg()
        if leg is None:
            return
        _, node = leg
        path, _ = shortest_path(self.g, node, self.g.dock_node)
        self.mission.route = self.mission.route[:self.idx + 1] + path
        self.legs = list(zip(self.mission.route, self.mission.route[1:]))
        self.returning = True
        self.mission.truncated = True


# ---------------------------------------------------------------------------
# reteach recommendation

@dataclass
class TraversalRecord:
    edge: str
    lost: bool
    mean_inliers: float
    outcome: str   # "ok" | "aborted"


def reteach_recommender(records: list[TraversalRecord], cfg: MissionConfig,
                        min_inliers: int) -> list[str]:
    """Rank edges whose trailing traversals look unhealthy.

    An edge is recommended when its loss rate exceeds the threshold or its
    mean inlier count over the trailing window drops below 2x min_inliers.
    """
    by_edge: dict[str, list[TraversalRecord]] = {}
    for r in records:
        by_edge.setdefault(r.edge, []).append(r)
    scored = []
    for ref, rs in by_edge.items():
        window = rs[-cfg.reteach_window:]
        loss_rate = sum(1 for r in window if r.lost or r.outcome == "aborted") / len(window)
        mean_inl = sum(r.mean_inliers for r in window) / len(window)
        if loss_rate > cfg.reteach_loss_rate or mean_inl < 2.0 * min_inliers:
            scored.append((-loss_rate, mean_inl, ref))
    return [ref for _, _, ref in sorted(scored)]
