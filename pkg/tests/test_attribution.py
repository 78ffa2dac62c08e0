from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from omni_attrib.attribution import (
    POLICY_INDEPENDENT,
    POLICY_ONE_TO_ONE,
    attribute_detection,
    attribute_speaker,
    build_cue_set,
    cosine,
    one_to_one_assign,
)
from omni_attrib.bank import ReferencePair
from omni_attrib.core import BoundingBox, ParticipantId, Utterance
from omni_attrib.errors import DimensionMismatchError, EmptyRosterError, ZeroEmbeddingError

from oracles import argmax_oracle, cosine_oracle, exhaustive_assignment_oracle


def refs_from_matrix(voice, face=None):
    face = voice if face is None else face
    return [
        ReferencePair(participant=ParticipantId(i), voice_embedding=np.asarray(v, float), face_embedding=np.asarray(f, float))
        for i, (v, f) in enumerate(zip(voice, face))
    ]


class TestCosine:
    def test_identical(self):
        assert cosine([1, 0], [1, 0]) == 1.0

    def test_orthogonal(self):
        assert cosine([1, 0], [0, 1]) == 0.0

    def test_hand_arithmetic(self):
        # dot = 2 + 2 + 4 = 8; norms are both 3
        assert cosine([1, 2, 2], [2, 1, 2]) == pytest.approx(8 / 9, abs=1e-12)

    def test_symmetry_and_errors(self):
        u, v = [0.3, -0.2, 0.9], [1.0, 0.4, -0.1]
        assert cosine(u, v) == cosine(v, u)
        with pytest.raises(ZeroEmbeddingError):
            cosine([0, 0], [1, 0])
        with pytest.raises(DimensionMismatchError):
            cosine([1, 0], [1, 0, 0])

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=2, max_size=8))
    def test_matches_pure_python_oracle(self, values):
        u = np.asarray(values) + 0.1
        v = np.asarray(values)[::-1] + 0.2
        if np.linalg.norm(u) == 0 or np.linalg.norm(v) == 0:
            return
        assert cosine(u, v) == pytest.approx(cosine_oracle(u, v), abs=1e-12)


class TestAttributeSpeaker:
    def test_exact_reference_match(self):
        refs = refs_from_matrix(np.eye(4))
        pid, score = attribute_speaker(np.eye(4)[2], refs)
        assert pid.render() == "Player2"
        assert score == 1.0

    def test_tie_breaks_to_lowest_index(self):
        voice = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 1.0]])
        refs = refs_from_matrix(voice)
        # candidate equidistant from Player1 and Player2 -> Player1
        pid, _ = attribute_speaker(np.array([0.1, 1.0]), refs)
        assert pid.render() == "Player1"

    def test_all_equal_goes_to_player0(self):
        refs = refs_from_matrix(np.ones((3, 4)))
        pid, _ = attribute_detection(np.ones(4), refs)
        assert pid.render() == "Player0"

    def test_empty_references(self):
        with pytest.raises(EmptyRosterError):
            attribute_speaker(np.ones(3), [])

    def test_brute_force_oracle_agreement(self):
        rng = np.random.default_rng(100)
        for _ in range(100):
            refs_mat = rng.normal(size=(6, 16))
            refs = refs_from_matrix(refs_mat)
            emb = rng.normal(size=16)
            pid, _ = attribute_speaker(emb, refs)
            assert pid.index == argmax_oracle(emb, refs_mat)
            pid2, _ = attribute_detection(emb, refs)
            assert pid2.index == argmax_oracle(emb, refs_mat)

    @given(st.floats(min_value=0.01, max_value=100.0, allow_nan=False))
    def test_argmax_scale_invariance(self, scale):
        rng = np.random.default_rng(17)
        refs = refs_from_matrix(rng.normal(size=(4, 8)))
        emb = rng.normal(size=8)
        pid, _ = attribute_speaker(emb, refs)
        pid_scaled, _ = attribute_speaker(emb * scale, refs)
        assert pid == pid_scaled


def make_utterances(n):
    return [Utterance(float(i), i + 0.5, f"line {i}") for i in range(n)]


def make_boxes(n):
    return [BoundingBox(i / n + 0.01, 0.5, (i + 1) / n - 0.01, 0.9) for i in range(n)]


class TestBuildCueSet:
    def test_noise_free_scene_equals_gold(self, clean_scene):
        scene = clean_scene
        obs = scene.observations
        result = build_cue_set(
            obs.utterances, obs.utterance_embeddings, obs.boxes, obs.box_embeddings, list(scene.bank.entries)
        )
        assert result.cue_set == scene.gold_cues

    def test_independent_policy_allows_duplicates(self):
        refs = refs_from_matrix(np.eye(4))
        target = np.eye(4)[3]
        boxes = make_boxes(2)
        result = build_cue_set([], [], boxes, [target, target * 2.0], refs, policy=POLICY_INDEPENDENT)
        assert [d.identity.render() for d in result.cue_set.nonverbal] == ["Player3", "Player3"]

    def test_one_to_one_gives_second_best(self):
        refs = refs_from_matrix(np.eye(4))
        primary = np.eye(4)[3]
        # both nearest Player3, second box slightly closer to Player1 than others
        second = primary + 0.4 * np.eye(4)[1]
        result = build_cue_set([], [], make_boxes(2), [primary, second], refs, policy=POLICY_ONE_TO_ONE)
        identities = [d.identity.render() for d in result.cue_set.nonverbal]
        assert sorted(identities) == ["Player1", "Player3"]
        assert identities[0] == "Player3"  # first box keeps the shared argmax

    def test_one_to_one_matches_exhaustive_assignment_oracle(self):
        rng = np.random.default_rng(23)
        for _ in range(60):
            n_boxes = int(rng.integers(1, 6))
            n_refs = int(rng.integers(1, 6))
            scores = rng.uniform(-1, 1, size=(n_boxes, n_refs))
            got = one_to_one_assign(scores)
            expected = exhaustive_assignment_oracle(scores.tolist())
            if n_boxes <= n_refs:
                assert got == expected
            else:
                # leftover rows fall back to their own argmax on both sides
                assert got == expected

    def test_chosen_similarity_dominates_vector(self, clean_scene):
        obs = clean_scene.observations
        result = build_cue_set(
            obs.utterances, obs.utterance_embeddings, obs.boxes, obs.box_embeddings, list(clean_scene.bank.entries)
        )
        for att, scores in zip(result.cue_set.verbal, result.utterance_scores):
            assert scores[att.speaker.index] >= scores.max() - 1e-12
        assert all(len(s) == len(clean_scene.bank.entries) for s in result.utterance_scores)

    def test_reference_permutation_equivariance(self):
        rng = np.random.default_rng(3)
        voices = rng.normal(size=(4, 8))
        refs = refs_from_matrix(voices)
        embs = [rng.normal(size=8) for _ in range(6)]
        utts = make_utterances(6)
        base = build_cue_set(utts, embs, [], [], refs)
        base_ids = [v.speaker.index for v in base.cue_set.verbal]
        perm = [2, 0, 3, 1]
        permuted_refs = [
            ReferencePair(participant=ParticipantId(i), voice_embedding=voices[perm[i]], face_embedding=voices[perm[i]])
            for i in range(4)
        ]
        permuted = build_cue_set(utts, embs, [], [], permuted_refs)
        inverse = {orig: new for new, orig in enumerate(perm)}
        assert [v.speaker.index for v in permuted.cue_set.verbal] == [inverse[i] for i in base_ids]

    def test_misaligned_embeddings_rejected(self):
        refs = refs_from_matrix(np.eye(3))
        with pytest.raises(DimensionMismatchError):
            build_cue_set(make_utterances(2), [np.ones(3)], [], [], refs)
