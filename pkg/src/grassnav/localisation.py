"""Coarse-to-fine localisation against the experience graph.

Coarse retrieval ranks keyframes by cosine similarity of bag-of-words
histograms; fine localisation does a breadth-first search around the seed
keyframes, associates live features to stored landmarks by mutual nearest
descriptor distance, and solves the rigid offset in closed form. Between
fixes the robot dead-reckons on simulated visual odometry.

Data association never sees ground-truth landmark ids.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .expgraph import ExperienceGraph, quantise
from .geometry import IDENTITY, Pose2, compose, normalize_angle
from .scenario import LocalisationConfig
from .world import CameraObservation


class LocaliserNotInitialised(Exception):
    """Manual (or prior) initialisation is required before localising."""


@dataclass
class LocalisationFix:
    keyframe_id: int
    offset: Pose2          # live frame expressed in the keyframe's frame
    inliers: int
    stamp: float


@dataclass
class VoEstimate:
    delta: Pose2
    cumulative: Pose2


def vo_step(true_delta: Pose2, cfg: LocalisationConfig,
            rng: np.random.Generator) -> Pose2:
    """Simulate one frame-to-frame odometry estimate.

    Zero-mean noise scales with motion magnitude, so standing still drifts
    nothing and fast motion drifts proportionally.
    """
    trans = math.hypot(true_delta.x, true_delta.y)
    rot = abs(true_delta.theta)
    if cfg.vo_trans_noise <= 0 and cfg.vo_rot_noise <= 0:
        return true_delta
    st = cfg.vo_trans_noise * trans
    sr = cfg.vo_rot_noise * rot + 0.1 * cfg.vo_trans_noise * trans
    nx, ny, nth = rng.standard_normal(3)
    return Pose2(true_delta.x + st * nx, true_delta.y + st * ny,
                 true_delta.theta + sr * nth)


def rigid_align(p: np.ndarray, q: np.ndarray) -> Pose2 | None:
    """Least-squares Pose2 T such that T(p_i) ~= q_i.

    Closed-form 2D point-set alignment: centroids plus the angle from the
    summed cross/dot products. Returns None for degenerate inputs.
    """
    if len(p) < 2:
        return None
    pc, qc = p.mean(axis=0), q.mean(axis=0)
    dp, dq = p - pc, q - qc
    dot = float(np.sum(dp[:, 0] * dq[:, 0] + dp[:, 1] * dq[:, 1]))
    cross = float(np.sum(dp[:, 0] * dq[:, 1] - dp[:, 1] * dq[:, 0]))
    if dot == 0.0 and cross == 0.0:
        return None
    theta = math.atan2(cross, dot)
    c, s = math.cos(theta), math.sin(theta)
    tx = qc[0] - (c * pc[0] - s * pc[1])
    ty = qc[1] - (s * pc[0] + c * pc[1])
    return Pose2(tx, ty, theta)


def _mutual_nn(live_desc: np.ndarray, map_desc: np.ndarray,
               tau_d: float) -> list[tuple[int, int]]:
    """Mutual nearest-neighbour pairs with distance <= tau_d.

    numpy argmin tie-breaks to the lowest index, which fixes the
    association order deterministically.
    """
    if len(live_desc) == 0 or len(map_desc) == 0:
        return []
    d2 = (np.sum(live_desc ** 2, axis=1)[:, None]
          + np.sum(map_desc ** 2, axis=1)[None, :]
          - 2.0 * live_desc @ map_desc.T)
    d = np.sqrt(np.maximum(d2, 0.0))
    nn_live = np.argmin(d, axis=1)
    nn_map = np.argmin(d, axis=0)
    pairs = []
    for i, j in enumerate(nn_live):
        if nn_map[j] == i and d[i, j] <= tau_d:
            pairs.append((i, int(j)))
    return pairs


def coarse_localise(graph: ExperienceGraph, bow_query: np.ndarray,
                    k: int) -> list[tuple[int, float]]:
    """Top-k keyframes by histogram cosine similarity.

    Ties break to the newer experience, then the lower keyframe id.
    """
    cache = graph.cache
    ids, bows, eids = cache["ids"], cache["bows"], cache["eids"]
    if len(ids) == 0:
        return []
    qn = np.linalg.norm(bow_query)
    bn = np.linalg.norm(bows, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = bows @ bow_query / np.where((bn * qn) > 0, bn * qn, np.inf)
    order = sorted(range(len(ids)),
                   key=lambda i: (-scores[i], -eids[i], ids[i]))
    return [(int(ids[i]), float(scores[i])) for i in order[:k]]


def fine_localise(graph: ExperienceGraph, seeds: list[int],
                  live_obs: CameraObservation, cfg: LocalisationConfig,
                  stamp: float | None = None) -> LocalisationFix | None:
    """BFS refinement around seed keyframes.

    Candidates are tried in (seed rank, BFS depth, keyframe id) order; the
    first one reaching min_inliers wins. Returns None when nothing does.
    """
    if len(live_obs) == 0:
        return None
    live_pts = live_obs.points()
    live_desc = live_obs.descriptors
    visited: set[int] = set()
    candidates: list[int] = []
    for seed in seeds:
        if seed not in graph.keyframes:
            continue
        frontier = deque([(seed, 0)])
        local_seen = {seed}
        while frontier:
            kf_id, depth = frontier.popleft()
            if kf_id not in visited:
                visited.add(kf_id)
                candidates.append(kf_id)
            if depth < cfg.radius:
                for nbr, _ in sorted(graph.adjacency.get(kf_id, [])):
                    if nbr not in local_seen:
                        local_seen.add(nbr)
                        frontier.append((nbr, depth + 1))
    for kf_id in candidates:
        kf = graph.keyframes[kf_id]
        pairs = _mutual_nn(live_desc, kf.descriptors, cfg.tau_d)
        if len(pairs) < max(3, 2):
            continue
        li = np.array([i for i, _ in pairs])
        mi = np.array([j for _, j in pairs])
        offset = rigid_align(live_pts[li], kf.landmarks_xy[mi])
        if offset is None:
            continue
        c, s = math.cos(offset.theta), math.sin(offset.theta)
        moved = live_pts[li] @ np.array([[c, s], [-s, c]]) + [offset.x, offset.y]
        resid = np.linalg.norm(moved - kf.landmarks_xy[mi], axis=1)
        inl = resid <= cfg.tau_g
        n_inl = int(inl.sum())
        if n_inl >= cfg.min_inliers:
            # one refit over inliers tightens the estimate
            refit = rigid_align(live_pts[li[inl]], kf.landmarks_xy[mi[inl]])
            if refit is not None:
                offset = refit
                c, s = math.cos(offset.theta), math.sin(offset.theta)
                moved = (live_pts[li] @ np.array([[c, s], [-s, c]])
                         + [offset.x, offset.y])
                resid = np.linalg.norm(moved - kf.landmarks_xy[mi], axis=1)
                n_inl = int((resid <= cfg.tau_g).sum())
            if n_inl >= cfg.min_inliers:
                return LocalisationFix(kf_id, offset, n_inl,
                                       stamp if stamp is not None else live_obs.timestamp)
    return None


@dataclass
class LocaliserState:
    initialised: bool = False
    pose_estimate: Pose2 | None = None
    last_fix: LocalisationFix | None = None
    cumulative_vo: Pose2 = field(default_factory=lambda: IDENTITY)
    consecutive_failures: int = 0
    lost: bool = False


class Localiser:
    """Owns the per-tick localisation state machine."""

    def __init__(self, graph: ExperienceGraph, cfg: LocalisationConfig):
        self.graph = graph
        self.cfg = cfg
        self.state = LocaliserState()

    def initialise(self, pose_guess: Pose2) -> None:
        """Manual (operator) or scripted seed; required before the first tick."""
        self.state = LocaliserState(initialised=True, pose_estimate=pose_guess)

    def nearest_keyframes(self, pose: Pose2, k: int = 2,
                          max_dist: float = 6.0) -> list[int]:
        cache = self.graph.cache
        pos, ids = cache["positions"], cache["ids"]
        if len(ids) == 0:
            return []
        d = np.hypot(pos[:, 0] - pose.x, pos[:, 1] - pose.y)
        order = np.argsort(d, kind="stable")[:k]
        return [int(ids[i]) for i in order if d[i] <= max_dist]

    def tick(self, vo_delta: Pose2, live_obs: CameraObservation,
             stamp: float) -> tuple[LocalisationFix | None, list[str]]:
        st = self.state
        if not st.initialised:
            raise LocaliserNotInitialised("manual initialisation required")
        st.pose_estimate = compose(st.pose_estimate, vo_delta)
        st.cumulative_vo = compose(st.cumulative_vo, vo_delta)
        events: list[str] = []

        seeds = self.nearest_keyframes(st.pose_estimate)
        if st.consecutive_failures >= self.cfg.n_reseed and len(live_obs):
            bow = quantise(live_obs.descriptors, self.graph.vocabulary)
            seeds = [kf for kf, _ in coarse_localise(self.graph, bow, 3)] + seeds

        fix = fine_localise(self.graph, seeds, live_obs, self.cfg, stamp)
        if fix is not None:
            kf = self.graph.keyframes[fix.keyframe_id]
            st.pose_estimate = compose(kf.map_pose, fix.offset)
            st.cumulative_vo = IDENTITY
            st.consecutive_failures = 0
            if st.lost:
                st.lost = False
                events.append("RELOCALISED")
            st.last_fix = fix
        else:
            st.consecutive_failures += 1
            if st.consecutive_failures == self.cfg.n_lost:
                st.lost = True
                events.append("LOST")
        return fix, events
