"""Topometric experience graph.

Keyframe nodes hold landmark snapshots, descriptors and a bag-of-words
histogram; edges hold odometry-derived relative poses and form a simple
chain per experience. Multiple experiences may cover the same physical
path; supergraph edges keep an "active" experience pointer that a re-teach
updates while older experiences are retained.

Persistence is a length-prefixed binary container with a version header
and a CRC32 per section so round-trips are bit-exact and corruption is
detected early.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2, compose

MAGIC = b"GNMAP\x00"
FORMAT_VERSION = 1


class MapError(Exception):
    """Base for map container failures."""


class MapVersionError(MapError):
    pass


class MapTruncatedError(MapError):
    pass


class MapChecksumError(MapError):
    pass


class GraphError(Exception):
    """Structural misuse of the experience graph."""


# ---------------------------------------------------------------------------
# vocabulary

def build_vocabulary(samples: np.ndarray, size: int, iters: int,
                     rng: np.random.Generator) -> np.ndarray:
    """Plain k-means over a descriptor sample; deterministic given the rng."""
    samples = np.asarray(samples, dtype=float)
    if len(samples) == 0:
        raise GraphError("cannot build vocabulary from empty sample")
    size = min(size, len(samples))
    centroids = samples[rng.choice(len(samples), size, replace=False)].copy()
    for _ in range(iters):
        d = np.linalg.norm(samples[:, None, :] - centroids[None, :, :], axis=2)
        assign = np.argmin(d, axis=1)
        for k in range(size):
            members = samples[assign == k]
            if len(members):
                centroids[k] = members.mean(axis=0)
    return centroids


def quantise(descriptors: np.ndarray, vocabulary: np.ndarray) -> np.ndarray:
    """L1-normalised histogram of nearest-centroid assignments.

    Ties break to the lowest centroid index; an empty descriptor set yields
    the zero vector.
    """
    if len(vocabulary) == 0:
        raise GraphError("empty vocabulary")
    v = len(vocabulary)
    hist = np.zeros(v)
    descriptors = np.asarray(descriptors, dtype=float)
    if len(descriptors) == 0:
        return hist
    d = np.linalg.norm(descriptors[:, None, :] - vocabulary[None, :, :], axis=2)
    assign = np.argmin(d, axis=1)  # argmin takes the lowest index on ties
    np.add.at(hist, assign, 1.0)
    return hist / hist.sum()


# ---------------------------------------------------------------------------
# graph

@dataclass
class Keyframe:
    id: int
    stamp: float
    landmarks_xy: np.ndarray     # (n, 2) in the keyframe's own frame
    descriptors: np.ndarray      # (n, D)
    bow: np.ndarray              # (V,) L1-normalised histogram
    experience_id: int
    map_pose: Pose2              # anchor ⊕ odometry chain, cached for seeding


@dataclass
class ExperienceEdge:
    from_id: int
    to_id: int
    relative_pose: Pose2


class ExperienceGraph:
    def __init__(self, vocabulary: np.ndarray):
        self.vocabulary = np.asarray(vocabulary, dtype=float)
        self.keyframes: dict[int, Keyframe] = {}
        self.edges: list[ExperienceEdge] = []
        self.adjacency: dict[int, list[tuple[int, Pose2]]] = {}
        self.experiences: dict[int, list[int]] = {}
        self.anchors: dict[int, Pose2] = {}
        # supergraph edge ref ("A|B") -> active experience id
        self.active_experience: dict[str, int] = {}
        self.experience_edge_ref: dict[int, str] = {}
        self._next_kf_id = 0
        self._cache: dict | None = None

    # -- mutation ----------------------------------------------------------

    def new_experience(self, anchor: Pose2, edge_ref: str | None = None) -> int:
        eid = max(self.experiences, default=-1) + 1
        self.experiences[eid] = []
        self.anchors[eid] = anchor
        if edge_ref is not None:
            self.experience_edge_ref[eid] = edge_ref
            self.active_experience[edge_ref] = eid
        return eid

    def append_keyframe(self, landmarks_xy: np.ndarray, descriptors: np.ndarray,
                        stamp: float, vo_delta: Pose2, experience_id: int) -> int:
        if experience_id not in self.experiences:
            raise GraphError(f"unknown experience {experience_id}")
        chain = self.experiences[experience_id]
        if chain:
            prev = self.keyframes[chain[-1]]
            map_pose = compose(prev.map_pose, vo_delta)
        else:
            map_pose = self.anchors[experience_id]
        kf = Keyframe(
            id=self._next_kf_id,
            stamp=stamp,
            landmarks_xy=np.asarray(landmarks_xy, dtype=float).reshape(-1, 2),
            descriptors=np.asarray(descriptors, dtype=float),
            bow=quantise(descriptors, self.vocabulary),
            experience_id=experience_id,
            map_pose=map_pose,
        )
        self._next_kf_id += 1
        self.keyframes[kf.id] = kf
        self.adjacency.setdefault(kf.id, [])
        if chain:
            e = ExperienceEdge(chain[-1], kf.id, vo_delta)
            self.edges.append(e)
            self.adjacency[e.from_id].append((e.to_id, e.relative_pose))
            self.adjacency[e.to_id].append((e.from_id, e.relative_pose))
        chain.append(kf.id)
        self._cache = None
        return kf.id

    def assign_experience(self, edge_ref: str, experience_id: int) -> None:
        """Bind an edge ref to an experience, creating the binding if new.

        Used when the edge codes are only known after a teach completes.
        """
        if experience_id not in self.experiences:
            raise GraphError(f"unknown experience {experience_id}")
        self.active_experience[edge_ref] = experience_id
        self.experience_edge_ref[experience_id] = edge_ref
        self._cache = None

    def replace_experience(self, edge_ref: str, new_experience_id: int) -> None:
        """Point a supergraph edge at a newer experience; old one is retained."""
        if edge_ref not in self.active_experience:
            raise GraphError(f"unknown supergraph edge ref {edge_ref!r}")
        if new_experience_id not in self.experiences:
            raise GraphError(f"unknown experience {new_experience_id}")
        self.active_experience[edge_ref] = new_experience_id
        self.experience_edge_ref[new_experience_id] = edge_ref
        self._cache = None

    def purge_experience(self, experience_id: int) -> None:
        """Explicit maintenance: drop a retired experience and its keyframes."""
        if experience_id not in self.experiences:
            raise GraphError(f"unknown experience {experience_id}")
        if experience_id in self.active_experience.values():
            raise GraphError(f"experience {experience_id} is still active")
        ids = set(self.experiences.pop(experience_id))
        self.anchors.pop(experience_id, None)
        self.experience_edge_ref.pop(experience_id, None)
        self.keyframes = {k: v for k, v in self.keyframes.items() if k not in ids}
        self.edges = [e for e in self.edges
                      if e.from_id not in ids and e.to_id not in ids]
        self.adjacency = {k: [(n, p) for n, p in v if n not in ids]
                          for k, v in self.adjacency.items() if k not in ids}
        self._cache = None

    # -- queries -----------------------------------------------------------

    def _build_cache(self) -> dict:
        ids = sorted(self.keyframes)
        if ids:
            bows = np.stack([self.keyframes[i].bow for i in ids])
            pos = np.array([[self.keyframes[i].map_pose.x, self.keyframes[i].map_pose.y]
                            for i in ids])
            eids = np.array([self.keyframes[i].experience_id for i in ids])
        else:
            v = len(self.vocabulary)
            bows, pos, eids = np.zeros((0, v)), np.zeros((0, 2)), np.zeros(0, dtype=int)
        return {"ids": np.array(ids, dtype=int), "bows": bows,
                "positions": pos, "eids": eids}

    @property
    def cache(self) -> dict:
        if self._cache is None:
            self._cache = self._build_cache()
        return self._cache

    def audit(self) -> list[str]:
        """Structural integrity check; returns a list of problems (empty = ok)."""
        problems = []
        for e in self.edges:
            if e.from_id not in self.keyframes or e.to_id not in self.keyframes:
                problems.append(f"edge {e.from_id}->{e.to_id} has missing endpoint")
        # chain property: within an experience each keyframe has at most one
        # incoming and one outgoing edge
        outs: dict[int, int] = {}
        ins: dict[int, int] = {}
        for e in self.edges:
            outs[e.from_id] = outs.get(e.from_id, 0) + 1
            ins[e.to_id] = ins.get(e.to_id, 0) + 1
        for kf_id, n in outs.items():
            if n > 1:
                problems.append(f"keyframe {kf_id} has out-degree {n}")
        for kf_id, n in ins.items():
            if n > 1:
                problems.append(f"keyframe {kf_id} has in-degree {n}")
        edge_set = {(e.from_id, e.to_id) for e in self.edges}
        for eid, chain in self.experiences.items():
            for a, b in zip(chain, chain[1:]):
                if (a, b) not in edge_set:
                    problems.append(f"experience {eid}: missing edge {a}->{b}")
            for kf_id in chain:
                kf = self.keyframes.get(kf_id)
                if kf is None:
                    problems.append(f"experience {eid}: missing keyframe {kf_id}")
                elif kf.experience_id != eid:
                    problems.append(f"keyframe {kf_id} experience mismatch")
        for eid in self.active_experience.values():
            if eid not in self.experiences:
                problems.append(f"active experience {eid} does not exist")
        return problems

    def stats(self) -> dict:
        return {
            "keyframes": len(self.keyframes),
            "edges": len(self.edges),
            "experiences": len(self.experiences),
            "active_edges": len(self.active_experience),
            "vocabulary_size": len(self.vocabulary),
        }


# ---------------------------------------------------------------------------
# persistence

def _pose_to_list(p: Pose2) -> list[float]:
    return [p.x, p.y, p.theta]


def _npy_bytes(a: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.save(buf, np.ascontiguousarray(a))
    return buf.getvalue()


def _npy_load(b: bytes) -> np.ndarray:
    return np.load(io.BytesIO(b))


def _write_section(out: io.BufferedWriter, name: bytes, payload: bytes) -> None:
    out.write(name)
    out.write(struct.pack("<Q", len(payload)))
    out.write(payload)
    out.write(struct.pack("<I", zlib.crc32(payload)))


def save(graph: ExperienceGraph, path: str) -> None:
    doc = {
        "next_kf_id": graph._next_kf_id,
        "keyframes": [
            {"id": kf.id, "stamp": kf.stamp,
             "landmarks": kf.landmarks_xy.tolist(),
             "descriptors": kf.descriptors.tolist(),
             "bow": [[int(i), float(w)] for i, w in enumerate(kf.bow) if w != 0.0],
             "experience_id": kf.experience_id,
             "map_pose": _pose_to_list(kf.map_pose)}
            for kf in sorted(graph.keyframes.values(), key=lambda k: k.id)
        ],
        "edges": [[e.from_id, e.to_id, *_pose_to_list(e.relative_pose)]
                  for e in graph.edges],
        "experiences": {str(k): v for k, v in sorted(graph.experiences.items())},
        "anchors": {str(k): _pose_to_list(v) for k, v in sorted(graph.anchors.items())},
        "active_experience": dict(sorted(graph.active_experience.items())),
        "experience_edge_ref": {str(k): v for k, v in
                                sorted(graph.experience_edge_ref.items())},
    }
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<H", FORMAT_VERSION))
        _write_section(f, b"VOCB", _npy_bytes(graph.vocabulary))
        _write_section(f, b"GRPH", zlib.compress(
            json.dumps(doc, sort_keys=True).encode("utf-8")))


def _read_exact(f, n: int, what: str) -> bytes:
    b = f.read(n)
    if len(b) != n:
        raise MapTruncatedError(f"truncated while reading {what}")
    return b


def load(path: str) -> ExperienceGraph:
    with open(path, "rb") as f:
        magic = _read_exact(f, len(MAGIC), "magic")
        if magic != MAGIC:
            raise MapVersionError("not a map container file")
        (version,) = struct.unpack("<H", _read_exact(f, 2, "version"))
        if version != FORMAT_VERSION:
            raise MapVersionError(f"unsupported map version {version}")
        sections: dict[bytes, bytes] = {}
        while True:
            name = f.read(4)
            if not name:
                break
            if len(name) != 4:
                raise MapTruncatedError("truncated section header")
            (length,) = struct.unpack("<Q", _read_exact(f, 8, "section length"))
            payload = _read_exact(f, length, f"section {name!r}")
            (crc,) = struct.unpack("<I", _read_exact(f, 4, "section crc"))
            if zlib.crc32(payload) != crc:
                raise MapChecksumError(f"checksum mismatch in section {name!r}")
            sections[name] = payload
    if b"VOCB" not in sections or b"GRPH" not in sections:
        raise MapTruncatedError("missing required sections")
    vocab = _npy_load(sections[b"VOCB"])
    doc = json.loads(zlib.decompress(sections[b"GRPH"]).decode("utf-8"))
    g = ExperienceGraph(vocab)
    g.experiences = {int(k): list(v) for k, v in doc["experiences"].items()}
    g.anchors = {int(k): Pose2(*v) for k, v in doc["anchors"].items()}
    g.active_experience = dict(doc["active_experience"])
    g.experience_edge_ref = {int(k): v for k, v in doc["experience_edge_ref"].items()}
    dim = vocab.shape[1] if vocab.ndim == 2 else 0
    for kd in doc["keyframes"]:
        bow = np.zeros(len(vocab))
        for i, w in kd["bow"]:
            bow[i] = w
        kf = Keyframe(
            id=kd["id"], stamp=kd["stamp"],
            landmarks_xy=np.array(kd["landmarks"], dtype=float).reshape(-1, 2),
            descriptors=np.array(kd["descriptors"], dtype=float).reshape(-1, dim),
            bow=bow, experience_id=kd["experience_id"],
            map_pose=Pose2(*kd["map_pose"]),
        )
        g.keyframes[kf.id] = kf
        g.adjacency.setdefault(kf.id, [])
    for fr, to, x, y, th in doc["edges"]:
        e = ExperienceEdge(int(fr), int(to), Pose2(x, y, th))
        g.edges.append(e)
        g.adjacency[e.from_id].append((e.to_id, e.relative_pose))
        g.adjacency[e.to_id].append((e.from_id, e.relative_pose))
    g._next_kf_id = doc["next_kf_id"]
    return g
