"""Teach-phase recording and repeat-phase path following.

Teaching appends a keyframe to a fresh experience every `keyframe_spacing`
metres of odometric arc-length (first and last tick always keyframed).
Repeating projects the localised pose onto the taught polyline and steers
with either a bare heading controller or pure pursuit; the heading-only
variant is deliberately naive, it is the known-bad baseline.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .expgraph import ExperienceGraph
from .geometry import IDENTITY, Pose2, compose, normalize_angle
from .scenario import TeachRepeatConfig
from .world import CameraObservation


class ControllerKind(enum.Enum):
    HEADING_ONLY = "heading_only"
    PURE_PURSUIT = "pure_pursuit"


class RepeatState(enum.Enum):
    FOLLOWING = "following"
    LOST = "lost"
    ABORTED = "aborted"
    COMPLETED = "completed"


@dataclass
class TeachTick:
    obs: CameraObservation
    vo_delta: Pose2
    stamp: float
    truth_pose: Pose2 | None = None  # anchor for the first keyframe


@dataclass
class TaughtPath:
    experience_id: int
    keyframe_ids: list[int]
    arc_lengths: list[float]  # cumulative odometric arc at each keyframe

    @property
    def length(self) -> float:
        return self.arc_lengths[-1] if self.arc_lengths else 0.0


class TeachRecorder:
    """Incremental teach session; one experience, keyframes as you drive.

    The batch `teach` helper below wraps this for offline traces; the
    runtime feeds it tick by tick so observers can watch keyframes appear.
    """

    def __init__(self, graph: ExperienceGraph, keyframe_spacing: float,
                 edge_ref: str | None = None, anchor: Pose2 | None = None):
        self.graph = graph
        self.spacing = keyframe_spacing
        self.edge_ref = edge_ref
        self.anchor = anchor
        self.experience_id: int | None = None
        self.keyframe_ids: list[int] = []
        self.arc_lengths: list[float] = []
        self._arc = 0.0
        self._since_kf = 0.0
        self._pending = IDENTITY
        self._last_tick: TeachTick | None = None

    def add(self, tick: TeachTick) -> int | None:
        """Consume one drive tick; returns a keyframe id when one is laid."""
        if self.experience_id is None:
            a = self.anchor or tick.truth_pose or IDENTITY
            self.experience_id = self.graph.new_experience(a, self.edge_ref)
            kf = self.graph.append_keyframe(
                tick.obs.points(), tick.obs.descriptors, tick.stamp,
                IDENTITY, self.experience_id)
            self.keyframe_ids.append(kf)
            self.arc_lengths.append(0.0)
            self._last_tick = tick
            return kf
        d = math.hypot(tick.vo_delta.x, tick.vo_delta.y)
        self._arc += d
        self._since_kf += d
        self._pending = compose(self._pending, tick.vo_delta)
        self._last_tick = tick
        if self._since_kf >= self.spacing:
            kf = self.graph.append_keyframe(
                tick.obs.points(), tick.obs.descriptors, tick.stamp,
                self._pending, self.experience_id)
            self.keyframe_ids.append(kf)
            self.arc_lengths.append(self._arc)
            self._since_kf = 0.0
            self._pending = IDENTITY
            return kf
        return None

    def finish(self) -> TaughtPath:
        if self.experience_id is None:
            raise ValueError("empty teach source")
        if self._since_kf > 1e-9 and self._last_tick is not None:
            tick = self._last_tick
            self.keyframe_ids.append(self.graph.append_keyframe(
                tick.obs.points(), tick.obs.descriptors, tick.stamp,
                self._pending, self.experience_id))
            self.arc_lengths.append(self._arc)
            self._since_kf = 0.0
            self._pending = IDENTITY
        return TaughtPath(self.experience_id, self.keyframe_ids,
                          self.arc_lengths)


def teach(graph: ExperienceGraph, source: Iterable[TeachTick],
          keyframe_spacing: float, edge_ref: str | None = None,
          anchor: Pose2 | None = None) -> TaughtPath:
    """Record an experience from a stream of drive ticks.

    A zero-length trace still produces one keyframe (degenerate path).
    """
    rec = TeachRecorder(graph, keyframe_spacing, edge_ref, anchor)
    for tick in source:
        rec.add(tick)
    return rec.finish()


def reversed_path(path: TaughtPath) -> TaughtPath:
    """The same keyframes walked end-to-start (for the reverse direction)."""
    total = path.length
    return TaughtPath(path.experience_id, list(reversed(path.keyframe_ids)),
                      [total - a for a in reversed(path.arc_lengths)])


# ---------------------------------------------------------------------------
# path geometry

class Polyline:
    """Piecewise-linear path with windowed projection and arc lookup."""

    def __init__(self, points: np.ndarray):
        self.points = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(self.points) < 2:
            # degenerate: duplicate the single point so projection still works
            self.points = np.vstack([self.points, self.points + [1e-9, 0.0]])
        deltas = np.diff(self.points, axis=0)
        self.seg_len = np.hypot(deltas[:, 0], deltas[:, 1])
        self.seg_len = np.maximum(self.seg_len, 1e-12)
        self.seg_dir = deltas / self.seg_len[:, None]
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])

    def project(self, x: float, y: float, last_seg: int,
                window: int) -> tuple[int, float, float, float]:
        """Nearest path point within +-window segments of last_seg.

        Returns (segment index, along-track arc, signed cross-track,
        segment heading).
        """
        n = len(self.seg_len)
        lo = max(0, last_seg - window)
        hi = min(n, last_seg + window + 1)
        best = None
        for i in range(lo, hi):
            p = self.points[i]
            d = self.seg_dir[i]
            rel = np.array([x - p[0], y - p[1]])
            u = float(np.clip(rel @ d, 0.0, self.seg_len[i]))
            perp = rel - u * d
            dist = float(np.hypot(perp[0], perp[1]))
            if best is None or dist < best[0]:
                cross = float(d[0] * rel[1] - d[1] * rel[0])
                best = (dist, i, self.cum[i] + u, cross,
                        math.atan2(d[1], d[0]))
        _, i, along, cross, heading = best
        return i, along, cross, heading

    def point_at(self, arc: float) -> np.ndarray:
        arc = float(np.clip(arc, 0.0, self.length))
        i = int(np.searchsorted(self.cum, arc, side="right")) - 1
        i = min(max(i, 0), len(self.seg_len) - 1)
        u = arc - self.cum[i]
        return self.points[i] + u * self.seg_dir[i]


# ---------------------------------------------------------------------------
# repeat controller

@dataclass
class RepeatStatus:
    state: RepeatState
    nearest_index: int = 0
    along_track: float = 0.0
    cross_track: float = 0.0
    heading_error: float = 0.0


class RepeatController:
    """Follows a taught path from localised pose estimates."""

    def __init__(self, graph: ExperienceGraph, path: TaughtPath,
                 cfg: TeachRepeatConfig,
                 controller: ControllerKind = ControllerKind.PURE_PURSUIT):
        self.cfg = cfg
        self.controller = controller
        self.path = path
        pts = np.array([[graph.keyframes[k].map_pose.x, graph.keyframes[k].map_pose.y]
                        for k in path.keyframe_ids])
        self.polyline = Polyline(pts)
        self.status = RepeatStatus(RepeatState.FOLLOWING)
        self._last_seg = 0
        self._lost_since: float | None = None

    def tick(self, pose: Pose2, lost: bool, speed_limit: float, estop: bool,
             t: float) -> tuple[tuple[float, float], RepeatStatus]:
        st = self.status
        if st.state in (RepeatState.ABORTED, RepeatState.COMPLETED):
            return (0.0, 0.0), st

        if lost:
            if st.state == RepeatState.FOLLOWING:
                st.state = RepeatState.LOST
                self._lost_since = t
            elif self._lost_since is not None and t - self._lost_since >= self.cfg.t_abort:
                st.state = RepeatState.ABORTED
            return (0.0, 0.0), st
        if st.state == RepeatState.LOST:
            st.state = RepeatState.FOLLOWING
            self._lost_since = None

        seg, along, cross, path_heading = self.polyline.project(
            pose.x, pose.y, self._last_seg, self.cfg.window)
        self._last_seg = seg
        st.nearest_index = seg
        st.along_track = along
        st.cross_track = cross
        st.heading_error = normalize_angle(pose.theta - path_heading)

        if along >= self.polyline.length - self.cfg.goal_tolerance:
            st.state = RepeatState.COMPLETED
            return (0.0, 0.0), st

        v = min(self.cfg.v_nominal, max(0.0, speed_limit))
        if estop:
            return (0.0, 0.0), st
        if self.controller is ControllerKind.HEADING_ONLY:
            w = -self.cfg.k_heading * st.heading_error
        else:
            la = self.polyline.point_at(along + self.cfg.lookahead)
            alpha = normalize_angle(math.atan2(la[1] - pose.y, la[0] - pose.x)
                                    - pose.theta)
            w = 2.0 * v * math.sin(alpha) / self.cfg.lookahead
        return (v, w), st
