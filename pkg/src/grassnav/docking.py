"""LiDAR docking: deterministic perception and the runway controller.

Segment extraction is split-and-merge with a total-least-squares refit,
ordered so that points near the previous dock detection are processed
first. Matching enumerates segment-pair correspondences against the known
dock model, solves the rigid transform from line constraints, and scores
by endpoint residuals. No randomness anywhere in the perception path.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, compose, inverse, normalize_angle
from .scenario import DockingConfig, PidConfig
from .world import DockLayout, LidarScan


# ---------------------------------------------------------------------------
# line fitting

@dataclass
class LineSegment:
    p1: np.ndarray
    p2: np.ndarray
    indices: np.ndarray       # scan indices of inlier points
    rms_residual: float

    @property
    def length(self) -> float:
        return float(np.hypot(*(self.p2 - self.p1)))

    @property
    def direction(self) -> np.ndarray:
        d = self.p2 - self.p1
        return d / max(np.hypot(*d), 1e-12)

    @property
    def midpoint(self) -> np.ndarray:
        return (self.p1 + self.p2) / 2.0


def fit_line(points: np.ndarray, indices: np.ndarray) -> LineSegment:
    """Total-least-squares fit; endpoints are extreme projections."""
    c = points.mean(axis=0)
    d = points - c
    cov = d.T @ d
    w, v = np.linalg.eigh(cov)
    direction = v[:, int(np.argmax(w))]
    proj = d @ direction
    perp = d - proj[:, None] * direction
    rms = float(np.sqrt(np.mean(perp[:, 0] ** 2 + perp[:, 1] ** 2)))
    lo, hi = float(proj.min()), float(proj.max())
    return LineSegment(c + lo * direction, c + hi * direction, indices, rms)


def _split(points: np.ndarray, s: int, e: int, tau: float) -> list[tuple[int, int]]:
    """Recursive split at the point of maximum perpendicular deviation."""
    if e - s < 2:
        return [(s, e)]
    p, q = points[s], points[e]
    chord = q - p
    norm = max(np.hypot(*chord), 1e-12)
    dev = np.abs((points[s + 1:e] - p) @ np.array([-chord[1], chord[0]])) / norm
    k = int(np.argmax(dev))
    if dev[k] > tau:
        mid = s + 1 + k
        return _split(points, s, mid, tau) + _split(points, mid, e, tau)
    return [(s, e)]


def extract_segments(scan: LidarScan, cfg: DockingConfig,
                     prior: "DockFix | None" = None) -> list[LineSegment]:
    """Split-and-merge line extraction over the angle-ordered scan.

    With a prior dock fix, groups nearest the predicted dock position are
    processed first so the dock's segments precede clutter in the output.
    Fully deterministic.
    """
    hit = scan.ranges < scan.max_range - 1e-9
    idx_all = np.nonzero(hit)[0]
    if len(idx_all) < 2:
        return []
    r, a = scan.ranges[idx_all], scan.angles[idx_all]
    pts = np.column_stack([r * np.cos(a), r * np.sin(a)])

    gaps = np.hypot(np.diff(pts[:, 0]), np.diff(pts[:, 1]))
    breaks = list(np.nonzero(gaps > cfg.group_gap)[0])
    groups = []
    start = 0
    for b in breaks + [len(pts) - 1]:
        if b + 1 - start >= 2:
            groups.append((start, b))
        start = b + 1

    if prior is not None and groups:
        dock_xy = np.array([prior.dock_pose.x, prior.dock_pose.y])
        groups.sort(key=lambda g: float(np.linalg.norm(
            pts[g[0]:g[1] + 1].mean(axis=0) - dock_xy)))

    segments: list[LineSegment] = []
    tau_merge = math.radians(cfg.tau_merge_deg)
    for s, e in groups:
        ranges = _split(pts, s, e, cfg.tau_split)
        fitted = [fit_line(pts[a0:b0 + 1], idx_all[a0:b0 + 1])
                  for a0, b0 in ranges if b0 - a0 >= 1]
        # merge collinear neighbours
        merged: list[LineSegment] = []
        for seg in fitted:
            if merged:
                last = merged[-1]
                ang = abs(normalize_angle(
                    math.atan2(*seg.direction[::-1])
                    - math.atan2(*last.direction[::-1])))
                ang = min(ang, math.pi - ang)
                gap = float(np.linalg.norm(seg.p1 - last.p2))
                if ang < tau_merge and gap < cfg.g_merge:
                    both = np.concatenate([last.indices, seg.indices])
                    pool = np.vstack([pts[np.searchsorted(idx_all, both)]])
                    merged[-1] = fit_line(pool, both)
                    continue
            merged.append(seg)
        segments.extend(m for m in merged if m.length > 1e-9)
    return segments


# ---------------------------------------------------------------------------
# model matching

@dataclass
class DockModel:
    segments: np.ndarray       # (k, 4) in dock frame
    runway_start: np.ndarray
    runway_end: np.ndarray

    @staticmethod
    def from_layout(layout: DockLayout) -> "DockModel":
        return DockModel(layout.model_segments.copy(),
                         layout.runway_start.copy(), layout.runway_end.copy())


@dataclass
class DockFix:
    dock_pose: Pose2           # dock frame expressed in the robot frame
    match_score: float
    stamp: float


def _rot(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def _point_to_segment(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    d = b - a
    L = max(float(np.hypot(*d)), 1e-12)
    u = float(np.clip((p - a) @ d / (L * L), 0.0, 1.0))
    return float(np.linalg.norm(p - (a + u * d)))


def _score(segments: list[LineSegment], model: DockModel,
           t: Pose2) -> tuple[float, int]:
    """Mean endpoint-to-model residual and count of supported model segments."""
    r = _rot(t.theta)
    tr = np.array([t.x, t.y])
    msegs = [(r @ m[:2] + tr, r @ m[2:] + tr) for m in model.segments]
    resid, supported = [], set()
    for seg in segments:
        for p in (seg.p1, seg.p2):
            ds = [_point_to_segment(p, a, b) for a, b in msegs]
            j = int(np.argmin(ds))
            if ds[j] <= 0.25:
                resid.append(ds[j])
                supported.add(j)
    if not resid:
        return math.inf, 0
    return float(np.mean(resid)), len(supported)


def _refine(segments: list[LineSegment], model: DockModel, t: Pose2,
            gate: float = 0.15) -> Pose2:
    """One line-constraint least-squares pass over all supporting segments."""
    # fragments shorter than any plausible model segment are corner/occlusion
    # artifacts whose fitted directions are wildly biased; keep them out
    min_len = min(float(np.hypot(m[2] - m[0], m[3] - m[1]))
                  for m in model.segments) - 0.25
    segments = [s for s in segments if s.length >= min_len]
    r = _rot(t.theta)
    tr = np.array([t.x, t.y])
    pairs = []  # (model row, detected segment)
    for seg in segments:
        best, bj = math.inf, -1
        for j, m in enumerate(model.segments):
            a, b = r @ m[:2] + tr, r @ m[2:] + tr
            d = max(_point_to_segment(seg.p1, a, b), _point_to_segment(seg.p2, a, b))
            if d < best:
                best, bj = d, j
        if best <= gate:
            pairs.append((bj, seg))
    if len(pairs) < 2:
        return t
    # rotation: length-weighted mean angular offset (mod pi)
    num = den = 0.0
    for j, seg in pairs:
        m = model.segments[j]
        ma = math.atan2(m[3] - m[1], m[2] - m[0])
        da = math.atan2(*seg.direction[::-1]) - (ma + t.theta)
        da = normalize_angle(2.0 * da) / 2.0  # wrap mod pi
        # angle variance of a fitted line goes as 1/(points * length^2),
        # and points grow with length, so inverse-variance weight is ~L^3
        w = seg.length ** 3
        num += w * da
        den += w
    theta = normalize_angle(t.theta + num / den)
    # translation: LS over line constraints n.(R q + t) = n.p
    rr = _rot(theta)
    rows, rhs = [], []
    for j, seg in pairs:
        m = model.segments[j]
        d = seg.direction
        n = np.array([-d[1], d[0]])
        q = rr @ np.array([(m[0] + m[2]) / 2, (m[1] + m[3]) / 2])
        rows.append(n)
        rhs.append(n @ seg.midpoint - n @ q)
    rows, rhs = np.array(rows), np.array(rhs)
    sol, *_ = np.linalg.lstsq(rows, rhs, rcond=None)
    return Pose2(float(sol[0]), float(sol[1]), theta)


def match_dock(segments: list[LineSegment], model: DockModel,
               cfg: DockingConfig, prior: DockFix | None = None,
               stamp: float = 0.0) -> DockFix | None:
    """Best rigid placement of the dock model among detected segments.

    Enumerates segment-pair correspondence hypotheses consistent in length
    and pairwise angle, solves each transform from line constraints,
    refines, and keeps the lowest endpoint-residual score under threshold.
    Returns None when no hypothesis qualifies (pose unobservable or dock
    absent).
    """
    if len(segments) < 2:
        return None
    ang_tol = math.radians(cfg.ang_tol_deg)
    mdirs = []
    for m in model.segments:
        mdirs.append(math.atan2(m[3] - m[1], m[2] - m[0]))
    mlens = [float(np.hypot(m[2] - m[0], m[3] - m[1])) for m in model.segments]

    best: tuple[float, Pose2] | None = None
    nseg = len(segments)
    for i1 in range(nseg):
        for i2 in range(nseg):
            if i1 == i2:
                continue
            s1, s2 = segments[i1], segments[i2]
            a1 = math.atan2(*s1.direction[::-1])
            a2 = math.atan2(*s2.direction[::-1])
            rel_det = normalize_angle(2.0 * (a2 - a1)) / 2.0
            for j1 in range(len(mlens)):
                if abs(s1.length - mlens[j1]) > cfg.len_tol:
                    continue
                for j2 in range(len(mlens)):
                    if j1 == j2 or abs(s2.length - mlens[j2]) > cfg.len_tol:
                        continue
                    rel_mod = normalize_angle(2.0 * (mdirs[j2] - mdirs[j1])) / 2.0
                    if abs(normalize_angle(2.0 * (rel_det - rel_mod)) / 2.0) > ang_tol:
                        continue
                    base = normalize_angle(a1 - mdirs[j1])
                    for theta in (base, normalize_angle(base + math.pi)):
                        r = _rot(theta)
                        rows, rhs = [], []
                        for si, mj in ((s1, j1), (s2, j2)):
                            m = model.segments[mj]
                            d = si.direction
                            n = np.array([-d[1], d[0]])
                            q = r @ np.array([(m[0] + m[2]) / 2, (m[1] + m[3]) / 2])
                            rows.append(n)
                            rhs.append(n @ si.midpoint - n @ q)
                        det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0]
                        if abs(det) < 1e-6:
                            continue
                        tx = (rhs[0] * rows[1][1] - rhs[1] * rows[0][1]) / det
                        ty = (rows[0][0] * rhs[1] - rows[1][0] * rhs[0]) / det
                        cand = Pose2(float(tx), float(ty), theta)
                        # midpoints must land near their model segments
                        ok = True
                        for si, mj in ((s1, j1), (s2, j2)):
                            m = model.segments[mj]
                            a = r @ m[:2] + [cand.x, cand.y]
                            b = r @ m[2:] + [cand.x, cand.y]
                            if _point_to_segment(si.midpoint, a, b) > 0.2:
                                ok = False
                                break
                        if not ok:
                            continue
                        if prior is not None:
                            dp = math.hypot(cand.x - prior.dock_pose.x,
                                            cand.y - prior.dock_pose.y)
                            da = abs(normalize_angle(cand.theta - prior.dock_pose.theta))
                            if dp > 0.5 or da > math.radians(20.0):
                                continue
                        cand = _refine(segments, model, cand)
                        score, supported = _score(segments, model, cand)
                        if supported < 2 or score > cfg.accept_residual:
                            continue
                        if best is None or score < best[0]:
                            best = (score, cand)
    if best is None:
        return None
    return DockFix(best[1], best[0], stamp)


def dock_point_mask(points: np.ndarray, fix: DockFix, model: DockModel,
                    margin: float = 0.2) -> np.ndarray:
    """True for scan points attributable to the detected dock structure.

    Used to exempt the dock from the safety curtain while docking.
    """
    if len(points) == 0:
        return np.zeros(0, dtype=bool)
    r = _rot(fix.dock_pose.theta)
    tr = np.array([fix.dock_pose.x, fix.dock_pose.y])
    mask = np.zeros(len(points), dtype=bool)
    for m in model.segments:
        a, b = r @ m[:2] + tr, r @ m[2:] + tr
        d = b - a
        L = max(float(np.hypot(*d)), 1e-12)
        u = np.clip((points - a) @ d / (L * L), 0.0, 1.0)
        proj = a + u[:, None] * d
        mask |= np.linalg.norm(points - proj, axis=1) <= margin
    return mask


# ---------------------------------------------------------------------------
# controller

class Pid:
    """Textbook PID with output clamp and clamped integrator (anti-windup)."""

    def __init__(self, cfg: PidConfig):
        self.cfg = cfg
        self.integral = 0.0
        self.prev_error: float | None = None

    def reset(self) -> None:
        self.integral = 0.0
        self.prev_error = None

    def step(self, error: float, dt: float) -> float:
        self.integral += error * dt
        if self.cfg.ki > 0:
            lim = self.cfg.clamp / self.cfg.ki
            self.integral = float(np.clip(self.integral, -lim, lim))
        deriv = 0.0 if self.prev_error is None else (error - self.prev_error) / dt
        self.prev_error = error
        out = self.cfg.kp * error + self.cfg.ki * self.integral + self.cfg.kd * deriv
        return float(np.clip(out, -self.cfg.clamp, self.cfg.clamp))


class DockingPhase(enum.Enum):
    APPROACH_RUNWAY = "approach_runway"
    ALIGN = "align"
    RUNWAY_TRACK = "runway_track"
    DOCKED = "docked"
    SEARCHING = "searching"


@dataclass
class DockingStatus:
    phase: DockingPhase
    failed: bool = False


class DockingController:
    """Runway state machine fed by dock fixes.

    All geometry is evaluated in the dock frame of the latest fix; the
    robot dead-reckons nothing here, so a stale fix simply freezes the
    reference until SEARCHING kicks in.
    """

    K_LATERAL = 1.8          # heading bias per metre of lateral offset
    MAX_LATERAL_BIAS = 0.5   # rad
    V_APPROACH = 0.3
    SPEED_EPS = 0.012

    def __init__(self, model: DockModel, cfg: DockingConfig):
        self.model = model
        self.cfg = cfg
        self.phase = DockingPhase.APPROACH_RUNWAY
        self.last_seen_side = 1.0    # +1 left, -1 right
        self.last_fix: DockFix | None = None
        self.last_fix_time: float | None = None
        self.search_since: float | None = None
        self.failed = False
        self.pid_speed = Pid(cfg.speed_pid)
        self.pid_heading = Pid(cfg.heading_pid)

    def _set_phase(self, phase: DockingPhase) -> None:
        if phase is not self.phase:
            self.phase = phase
            self.pid_speed.reset()
            self.pid_heading.reset()

    def tick(self, fix: DockFix | None, robot_speed: float, t: float,
             dt: float) -> tuple[tuple[float, float], DockingStatus]:
        if fix is not None:
            self.last_fix = fix
            self.last_fix_time = t
            self.last_seen_side = 1.0 if math.atan2(fix.dock_pose.y,
                                                    fix.dock_pose.x) >= 0 else -1.0
            if self.phase is DockingPhase.SEARCHING:
                self._set_phase(DockingPhase.APPROACH_RUNWAY)
                self.search_since = None

        if self.phase is DockingPhase.DOCKED:
            return (0.0, 0.0), DockingStatus(self.phase, self.failed)

        unseen = (self.last_fix_time is None
                  or t - self.last_fix_time > self.cfg.t_unseen)
        if unseen:
            if self.phase is not DockingPhase.SEARCHING:
                self._set_phase(DockingPhase.SEARCHING)
                self.search_since = t
            elif self.search_since is not None and t - self.search_since > self.cfg.t_search:
                self.failed = True
            return (0.0, self.cfg.w_search * self.last_seen_side), \
                DockingStatus(self.phase, self.failed)

        # geometry in the dock frame of the latest fix
        robot = inverse(self.last_fix.dock_pose)
        xr, yr, thr = robot.x, robot.y, robot.theta
        x_end = float(self.model.runway_end[0])
        x_start = float(self.model.runway_start[0])
        dist_to_end = xr - x_end
        runway_heading = math.pi  # runway points toward -x in the dock frame

        if self.phase is DockingPhase.APPROACH_RUNWAY:
            if abs(yr) <= self.cfg.d_runway:
                self._set_phase(DockingPhase.ALIGN)
            else:
                alpha = normalize_angle(math.atan2(0.0 - yr, x_start - xr) - thr)
                if abs(alpha) > math.pi / 3:
                    return (0.0, float(np.clip(2.0 * alpha, -0.8, 0.8))), \
                        DockingStatus(self.phase, self.failed)
                w = float(np.clip(2.0 * alpha, -0.8, 0.8))
                return (self.V_APPROACH, w), DockingStatus(self.phase, self.failed)

        if self.phase is DockingPhase.ALIGN:
            e = normalize_angle(runway_heading - thr)
            if abs(e) <= math.radians(self.cfg.align_tol_deg):
                self._set_phase(DockingPhase.RUNWAY_TRACK)
            else:
                return (0.0, float(np.clip(2.0 * e, -0.8, 0.8))), \
                    DockingStatus(self.phase, self.failed)

        # RUNWAY_TRACK
        if dist_to_end <= self.cfg.d_docked and abs(robot_speed) <= self.SPEED_EPS:
            self._set_phase(DockingPhase.DOCKED)
            return (0.0, 0.0), DockingStatus(self.phase, self.failed)
        if abs(yr) > 2.0 * self.cfg.d_runway and dist_to_end > 1.0:
            self._set_phase(DockingPhase.APPROACH_RUNWAY)
            return (0.0, 0.0), DockingStatus(self.phase, self.failed)
        v = self.pid_speed.step(max(dist_to_end, 0.0), dt)
        v = max(0.0, v)
        bias = float(np.clip(self.K_LATERAL * yr, -self.MAX_LATERAL_BIAS,
                             self.MAX_LATERAL_BIAS))
        theta_des = normalize_angle(runway_heading + bias)
        e = normalize_angle(theta_des - thr)
        w = self.pid_heading.step(e, dt)
        return (v, w), DockingStatus(self.phase, self.failed)
