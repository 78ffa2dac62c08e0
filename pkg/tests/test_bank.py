from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from omni_attrib.bank import (
    ReferenceBank,
    ReferencePair,
    banks_equal,
    enroll,
    get_references,
    load_bank,
    save_bank,
)
from omni_attrib.core import ParticipantId
from omni_attrib.errors import (
    DuplicateParticipantError,
    MissingMediaError,
    UnknownParticipantError,
    ZeroEmbeddingError,
)


def unit(vec):
    arr = np.asarray(vec, dtype=np.float64)
    return arr / np.linalg.norm(arr)


def bank_with_orthogonal_entries(n=3, dim=8, threshold=0.5):
    entries = []
    for i in range(n):
        v = np.zeros(dim)
        v[i] = 1.0
        f = np.zeros(dim)
        f[dim - 1 - i] = 1.0
        entries.append(
            ReferencePair(participant=ParticipantId(i), voice_embedding=v, face_embedding=f)
        )
    return ReferenceBank(scene_id="scene", entries=entries, enrollment_threshold=threshold)


class TestEnroll:
    def test_empty_bank_enrolls_player0(self):
        bank = ReferenceBank(scene_id="s", entries=[])
        pid, was_new = enroll(bank, np.ones(4), np.ones(4))
        assert (pid.render(), was_new) == ("Player0", True)

    def test_exact_match_reuses_entry(self):
        bank = bank_with_orthogonal_entries()
        target = bank.entries[1]
        pid, was_new = enroll(bank, target.voice_embedding, target.face_embedding)
        assert (pid.render(), was_new) == ("Player1", False)

    def test_orthogonal_candidate_creates_player3(self):
        # similarities against all 3 stored entries are exactly 0 < 0.5
        bank = bank_with_orthogonal_entries(n=3, dim=8)
        voice = np.zeros(8)
        voice[5] = 1.0
        face = np.zeros(8)
        face[2] = 1.0
        pid, was_new = enroll(bank, voice, face)
        assert (pid.render(), was_new) == ("Player3", True)

    def test_zero_norm_raises(self):
        bank = bank_with_orthogonal_entries()
        with pytest.raises(ZeroEmbeddingError):
            enroll(bank, np.zeros(8), np.ones(8))

    def test_idempotent_for_enrolled_candidate(self):
        bank = ReferenceBank(scene_id="s", entries=[])
        voice, face = unit([1, 2, 3]), unit([3, 2, 1])
        pid1, new1 = enroll(bank, voice, face)
        pid2, new2 = enroll(bank, voice, face)
        assert new1 and not new2
        assert pid1 == pid2
        assert len(bank) == 1

    def test_degraded_mode_single_modality(self):
        bank = bank_with_orthogonal_entries()
        target = bank.entries[2]
        pid, was_new = enroll(bank, voice_embedding=target.voice_embedding, face_embedding=None)
        assert (pid.render(), was_new) == ("Player2", False)

    @given(st.floats(min_value=0.001, max_value=1000.0, allow_nan=False))
    def test_scale_invariance(self, scale):
        bank = bank_with_orthogonal_entries()
        target = bank.entries[0]
        pid, was_new = enroll(bank, target.voice_embedding * scale, target.face_embedding * scale)
        assert (pid.index, was_new) == (0, False)

    def test_dense_monotone_indexing(self):
        rng = np.random.default_rng(5)
        bank = ReferenceBank(scene_id="s", entries=[], enrollment_threshold=0.99)
        sizes = []
        for _ in range(6):
            pid, was_new = enroll(bank, unit(rng.normal(size=16)), unit(rng.normal(size=16)))
            sizes.append(len(bank))
            if was_new:
                assert pid.index == len(bank) - 1
        assert sizes == sorted(sizes)


class TestPersistence:
    def _bank_with_media(self, tmp_path, n=5):
        entries = []
        rng = np.random.default_rng(1)
        for i in range(n):
            voice_ref = f"ref_{i}.wav"
            portrait_ref = f"ref_{i}.png"
            (tmp_path / voice_ref).write_bytes(b"RIFF")
            (tmp_path / portrait_ref).write_bytes(b"\x89PNG")
            entries.append(
                ReferencePair(
                    participant=ParticipantId(i),
                    voice_ref=voice_ref,
                    portrait_ref=portrait_ref,
                    voice_embedding=rng.normal(size=12),
                    face_embedding=rng.normal(size=12),
                )
            )
        return ReferenceBank(scene_id="roundtrip", entries=entries, enrollment_threshold=0.625)

    def test_save_load_round_trip(self, tmp_path):
        bank = self._bank_with_media(tmp_path)
        save_bank(bank, tmp_path)
        loaded = load_bank(tmp_path)
        assert banks_equal(bank, loaded)

    def test_duplicate_participant_rejected(self, tmp_path):
        bank = self._bank_with_media(tmp_path, n=2)
        save_bank(bank, tmp_path)
        doc = json.loads((tmp_path / "bank.json").read_text())
        doc["entries"][1]["participant"] = "Player0"
        (tmp_path / "bank.json").write_text(json.dumps(doc))
        with pytest.raises(DuplicateParticipantError):
            load_bank(tmp_path)

    def test_missing_media_named_in_error(self, tmp_path):
        bank = self._bank_with_media(tmp_path, n=2)
        save_bank(bank, tmp_path)
        (tmp_path / "ref_1.wav").unlink()
        with pytest.raises(MissingMediaError) as exc:
            load_bank(tmp_path)
        assert "ref_1.wav" in str(exc.value)

    def test_malformed_manifest(self, tmp_path):
        (tmp_path / "bank.json").write_text("{not json")
        from omni_attrib.errors import MalformedRecordError

        with pytest.raises(MalformedRecordError):
            load_bank(tmp_path)


class TestGetReferences:
    def test_subset_selection_in_roster_order(self):
        bank = bank_with_orthogonal_entries(n=3)
        roster = [ParticipantId(0), ParticipantId(1)]
        pairs = get_references(bank, roster)
        assert [p.participant.index for p in pairs] == [0, 1]

    def test_unknown_participant_named(self):
        bank = bank_with_orthogonal_entries(n=3)
        with pytest.raises(UnknownParticipantError) as exc:
            get_references(bank, [ParticipantId(5)])
        assert "Player5" in str(exc.value)

    def test_random_roster_order_matches_lookup_oracle(self):
        import random

        bank = bank_with_orthogonal_entries(n=6)
        by_id = {e.participant: e for e in bank.entries}  # independent lookup oracle
        rng = random.Random(9)
        for _ in range(20):
            roster = [ParticipantId(i) for i in rng.sample(range(6), k=rng.randint(1, 6))]
            pairs = get_references(bank, roster)
            assert pairs == [by_id[pid] for pid in roster]
