import math

import numpy as np
import pytest

from grassnav.expgraph import (ExperienceGraph, GraphError, MapChecksumError,
                               MapTruncatedError, MapVersionError,
                               build_vocabulary, load, quantise, save)
from grassnav.geometry import IDENTITY, Pose2, compose
from conftest import random_pose


def unit_vectors(rng, n, dim=8):
    d = rng.standard_normal((n, dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


@pytest.fixture
def vocab():
    rng = np.random.default_rng(5)
    return build_vocabulary(unit_vectors(rng, 200), 16, 8, rng)


def random_graph(vocab, n_keyframes=20, n_exp=2, seed=9) -> ExperienceGraph:
    rng = np.random.default_rng(seed)
    g = ExperienceGraph(vocab)
    for e in range(n_exp):
        eid = g.new_experience(random_pose(rng), edge_ref=f"A|B{e}")
        for k in range(n_keyframes // n_exp):
            n = rng.integers(3, 10)
            g.append_keyframe(rng.uniform(-5, 5, (n, 2)), unit_vectors(rng, n),
                              stamp=float(k), vo_delta=random_pose(rng),
                              experience_id=eid)
    return g


class TestQuantise:
    def test_descriptors_at_centroids_give_one_hot_sum(self, vocab):
        hist = quantise(vocab[[3, 3, 7]], vocab)
        assert hist[3] == pytest.approx(2 / 3)
        assert hist[7] == pytest.approx(1 / 3)
        assert hist.sum() == pytest.approx(1.0)

    def test_empty_input_zero_vector(self, vocab):
        hist = quantise(np.zeros((0, vocab.shape[1])), vocab)
        assert np.all(hist == 0)

    def test_matches_brute_force_nearest_neighbour(self, vocab):
        rng = np.random.default_rng(11)
        descs = unit_vectors(rng, 50)
        hist = quantise(descs, vocab)
        expect = np.zeros(len(vocab))
        for d in descs:
            dists = [np.linalg.norm(d - c) for c in vocab]
            expect[int(np.argmin(dists))] += 1
        expect /= expect.sum()
        np.testing.assert_allclose(hist, expect, atol=1e-12)

    def test_order_independent(self, vocab):
        rng = np.random.default_rng(12)
        descs = unit_vectors(rng, 30)
        h1 = quantise(descs, vocab)
        h2 = quantise(descs[::-1], vocab)
        np.testing.assert_allclose(h1, h2)


class TestAppend:
    def test_first_keyframe_has_no_incoming_edge(self, vocab):
        g = ExperienceGraph(vocab)
        eid = g.new_experience(IDENTITY)
        kf = g.append_keyframe(np.zeros((0, 2)), np.zeros((0, 8)), 0.0,
                               IDENTITY, eid)
        assert not any(e.to_id == kf for e in g.edges)
        assert g.audit() == []

    def test_chained_relative_pose(self, vocab):
        g = ExperienceGraph(vocab)
        eid = g.new_experience(IDENTITY)
        for i in range(2):
            g.append_keyframe(np.zeros((0, 2)), np.zeros((0, 8)), float(i),
                              Pose2(1, 0, 0), eid)
        assert len(g.edges) == 1
        assert g.edges[0].relative_pose == Pose2(1, 0, 0)

    def test_chain_of_deltas_matches_fold_oracle(self, vocab):
        rng = np.random.default_rng(13)
        g = ExperienceGraph(vocab)
        eid = g.new_experience(IDENTITY)
        deltas = [random_pose(rng) for _ in range(10)]
        expect = IDENTITY
        last = None
        for i, d in enumerate(deltas):
            last = g.append_keyframe(np.zeros((0, 2)), np.zeros((0, 8)),
                                     float(i), d, eid)
            if i > 0:
                expect = compose(expect, d)
        got = g.keyframes[last].map_pose
        assert math.hypot(got.x - expect.x, got.y - expect.y) < 1e-9

    def test_unknown_experience_rejected(self, vocab):
        g = ExperienceGraph(vocab)
        with pytest.raises(GraphError):
            g.append_keyframe(np.zeros((0, 2)), np.zeros((0, 8)), 0.0,
                              IDENTITY, 42)

    def test_audit_clean_after_random_operations(self, vocab):
        g = random_graph(vocab, 40, 4)
        assert g.audit() == []


class TestReplace:
    def test_active_pointer_last_writer_wins(self, vocab):
        g = random_graph(vocab, 10, 1)
        e1 = g.new_experience(IDENTITY)
        e2 = g.new_experience(IDENTITY)
        g.replace_experience("A|B0", e1)
        g.replace_experience("A|B0", e2)
        assert g.active_experience["A|B0"] == e2

    def test_old_experience_retained_and_queryable(self, vocab, tmp_path):
        g = random_graph(vocab, 10, 1)
        old = g.active_experience["A|B0"]
        e1 = g.new_experience(IDENTITY)
        g.append_keyframe(np.zeros((0, 2)), np.zeros((0, 8)), 0.0, IDENTITY, e1)
        g.replace_experience("A|B0", e1)
        assert old in g.experiences
        p = tmp_path / "m.gnmap"
        save(g, str(p))
        g2 = load(str(p))
        assert old in g2.experiences
        assert g2.experiences[old] == g.experiences[old]

    def test_unknown_ref_rejected(self, vocab):
        g = random_graph(vocab, 4, 1)
        with pytest.raises(GraphError):
            g.replace_experience("X|Y", 0)

    def test_purge_removes_only_inactive(self, vocab):
        g = random_graph(vocab, 10, 1)
        active = g.active_experience["A|B0"]
        with pytest.raises(GraphError):
            g.purge_experience(active)
        e1 = g.new_experience(IDENTITY)
        g.append_keyframe(np.zeros((0, 2)), np.zeros((0, 8)), 0.0, IDENTITY, e1)
        g.replace_experience("A|B0", e1)
        g.purge_experience(active)
        assert active not in g.experiences
        assert g.audit() == []


def graphs_equal(a: ExperienceGraph, b: ExperienceGraph) -> bool:
    if sorted(a.keyframes) != sorted(b.keyframes):
        return False
    for kid, kf in a.keyframes.items():
        other = b.keyframes[kid]
        if kf.experience_id != other.experience_id or kf.stamp != other.stamp:
            return False
        if not np.array_equal(kf.landmarks_xy, other.landmarks_xy):
            return False
        if not np.array_equal(kf.descriptors, other.descriptors):
            return False
        if not np.array_equal(kf.bow, other.bow):
            return False
        if kf.map_pose != other.map_pose:
            return False
    return (a.experiences == b.experiences
            and a.active_experience == b.active_experience
            and np.array_equal(a.vocabulary, b.vocabulary)
            and [(e.from_id, e.to_id, e.relative_pose) for e in a.edges]
            == [(e.from_id, e.to_id, e.relative_pose) for e in b.edges])


class TestPersistence:
    def test_empty_graph_round_trip(self, vocab, tmp_path):
        g = ExperienceGraph(vocab)
        p = tmp_path / "empty.gnmap"
        save(g, str(p))
        assert graphs_equal(g, load(str(p)))

    def test_large_random_round_trip(self, vocab, tmp_path):
        g = random_graph(vocab, 500, 5, seed=21)
        p = tmp_path / "big.gnmap"
        save(g, str(p))
        assert graphs_equal(g, load(str(p)))

    def test_corrupted_payload_raises_checksum_error(self, vocab, tmp_path):
        g = random_graph(vocab, 20, 2)
        p = tmp_path / "c.gnmap"
        save(g, str(p))
        raw = bytearray(p.read_bytes())
        raw[len(raw) // 2] ^= 0xFF
        p.write_bytes(bytes(raw))
        with pytest.raises(MapChecksumError):
            load(str(p))

    def test_truncation_detected(self, vocab, tmp_path):
        g = random_graph(vocab, 20, 2)
        p = tmp_path / "t.gnmap"
        save(g, str(p))
        raw = p.read_bytes()
        p.write_bytes(raw[:len(raw) - 10])
        with pytest.raises(MapTruncatedError):
            load(str(p))

    def test_version_mismatch_detected(self, vocab, tmp_path):
        g = random_graph(vocab, 5, 1)
        p = tmp_path / "v.gnmap"
        save(g, str(p))
        raw = bytearray(p.read_bytes())
        raw[6] = 0xEE  # version field
        p.write_bytes(bytes(raw))
        with pytest.raises(MapVersionError):
            load(str(p))

    def test_bow_recomputable_after_load(self, vocab, tmp_path):
        g = random_graph(vocab, 10, 1)
        p = tmp_path / "b.gnmap"
        save(g, str(p))
        g2 = load(str(p))
        for kf in g2.keyframes.values():
            np.testing.assert_allclose(kf.bow, quantise(kf.descriptors, g2.vocabulary),
                                       atol=1e-12)
