"""Per-participant reference pairs: the voice/portrait anchors for attribution.

A bank is a directory holding ``bank.json`` plus the media files it points at
(mono 16 kHz PCM WAV clips, PNG or JPEG portraits). Embeddings round-trip
bit-exact as base64-encoded little-endian float64 arrays.

Concurrency: single writer (enroll/save), concurrent readers between writes.
"""

from __future__ import annotations

import base64
import json
import threading
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .core import ParticipantId
from .errors import (
    DuplicateParticipantError,
    MalformedRecordError,
    MissingMediaError,
    UnknownParticipantError,
    ZeroEmbeddingError,
)

BANK_FILENAME = "bank.json"
BANK_FORMAT = "omni-attrib/bank/1"
DEFAULT_ENROLLMENT_THRESHOLD = 0.5
MAX_VOICE_CLIP_SECONDS = 5.0


def encode_embedding(vec) -> dict:
    arr = np.ascontiguousarray(np.asarray(vec, dtype=np.float64))
    return {"dim": int(arr.shape[0]), "data": base64.b64encode(arr.tobytes()).decode("ascii")}


def decode_embedding(obj: dict) -> np.ndarray:
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype=np.float64).copy()
    if arr.shape[0] != int(obj["dim"]):
        raise MalformedRecordError(f"embedding dim {obj['dim']} does not match payload length {arr.shape[0]}")
    return arr


@dataclass(frozen=True)
class ReferencePair:
    """One participant's anchors: a voice clip (<= 5 s) and a portrait crop."""

    participant: ParticipantId
    voice_ref: str = ""
    portrait_ref: str = ""
    voice_embedding: Optional[np.ndarray] = None
    face_embedding: Optional[np.ndarray] = None

    def with_embeddings(self, voice=None, face=None) -> "ReferencePair":
        return replace(
            self,
            voice_embedding=self.voice_embedding if voice is None else np.asarray(voice, dtype=np.float64),
            face_embedding=self.face_embedding if face is None else np.asarray(face, dtype=np.float64),
        )


@dataclass
class ReferenceBank:
    scene_id: str
    entries: list = field(default_factory=list)
    enrollment_threshold: float = DEFAULT_ENROLLMENT_THRESHOLD
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            if e.participant in seen:
                raise DuplicateParticipantError(f"duplicate bank entry for {e.participant}")
            seen.add(e.participant)
        self.entries.sort(key=lambda e: e.participant.index)

    def __len__(self) -> int:
        return len(self.entries)

    def get(self, participant: ParticipantId) -> ReferencePair:
        for e in self.entries:
            if e.participant == participant:
                return e
        raise UnknownParticipantError(participant.render())

    def add(self, pair: ReferencePair) -> None:
        with self._lock:
            if any(e.participant == pair.participant for e in self.entries):
                raise DuplicateParticipantError(f"duplicate bank entry for {pair.participant}")
            self.entries.append(pair)
            self.entries.sort(key=lambda e: e.participant.index)


def _norm(vec) -> float:
    return float(np.linalg.norm(np.asarray(vec, dtype=np.float64)))


def _cos(u, v) -> float:
    a = np.asarray(u, dtype=np.float64)
    b = np.asarray(v, dtype=np.float64)
    na, nb = _norm(a), _norm(b)
    if na == 0.0 or nb == 0.0:
        raise ZeroEmbeddingError("cosine similarity undefined for zero-norm vector")
    return float(np.dot(a, b) / (na * nb))


def match_score(
    entry: ReferencePair,
    voice_embedding=None,
    face_embedding=None,
    voice_weight: float = 0.5,
    face_weight: float = 0.5,
) -> Optional[float]:
    """Weighted mean of the per-modality cosines over modalities present on
    both sides; None when no modality is comparable (degraded-mode rule)."""
    scores = []
    weights = []
    if voice_embedding is not None and entry.voice_embedding is not None:
        scores.append(_cos(voice_embedding, entry.voice_embedding))
        weights.append(voice_weight)
    if face_embedding is not None and entry.face_embedding is not None:
        scores.append(_cos(face_embedding, entry.face_embedding))
        weights.append(face_weight)
    if not scores:
        return None
    total = sum(weights)
    if total == 0.0:
        return None
    return sum(s * w for s, w in zip(scores, weights)) / total


def enroll(
    bank: ReferenceBank,
    voice_embedding=None,
    face_embedding=None,
    voice_ref: str = "",
    portrait_ref: str = "",
    voice_weight: float = 0.5,
    face_weight: float = 0.5,
):
    """Match a candidate against the bank or register a new identity.

    Returns (ParticipantId, was_new). The candidate matches the best-scoring
    existing entry when that score reaches the enrollment threshold; otherwise
    it is appended with the next dense index.
    """
    if voice_embedding is None and face_embedding is None:
        raise ZeroEmbeddingError("enroll needs at least one candidate embedding")
    for emb, what in ((voice_embedding, "voice"), (face_embedding, "face")):
        if emb is not None and _norm(emb) == 0.0:
            raise ZeroEmbeddingError(f"zero-norm candidate {what} embedding")

    with bank._lock:
        best_id: Optional[ParticipantId] = None
        best_score = -np.inf
        for entry in bank.entries:
            score = match_score(entry, voice_embedding, face_embedding, voice_weight, face_weight)
            if score is not None and score > best_score:
                best_score = score
                best_id = entry.participant
        if best_id is not None and best_score >= bank.enrollment_threshold:
            return best_id, False

        new_id = ParticipantId(len(bank.entries))
        pair = ReferencePair(
            participant=new_id,
            voice_ref=voice_ref,
            portrait_ref=portrait_ref,
            voice_embedding=None if voice_embedding is None else np.asarray(voice_embedding, dtype=np.float64),
            face_embedding=None if face_embedding is None else np.asarray(face_embedding, dtype=np.float64),
        )
        bank.entries.append(pair)
        return new_id, True


def get_references(bank: ReferenceBank, roster: Sequence[ParticipantId]) -> list:
    """Reference pairs in roster order; unknown ids raise."""
    by_id = {e.participant: e for e in bank.entries}
    out = []
    for pid in roster:
        if pid not in by_id:
            raise UnknownParticipantError(pid.render())
        out.append(by_id[pid])
    return out


def save_bank(bank: ReferenceBank, directory: Path) -> Path:
    """Write bank.json into `directory`; media paths stay relative to it."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    doc = {
        "format": BANK_FORMAT,
        "scene_id": bank.scene_id,
        "enrollment_threshold": bank.enrollment_threshold,
        "entries": [
            {
                "participant": e.participant.render(),
                "voice": e.voice_ref,
                "portrait": e.portrait_ref,
                "voice_embedding": None if e.voice_embedding is None else encode_embedding(e.voice_embedding),
                "face_embedding": None if e.face_embedding is None else encode_embedding(e.face_embedding),
            }
            for e in bank.entries
        ],
    }
    path = directory / BANK_FILENAME
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def load_bank(directory: Path, check_media: bool = True) -> ReferenceBank:
    """Read bank.json and validate it: schema, unique ids, media existence."""
    directory = Path(directory)
    path = directory / BANK_FILENAME
    if not path.exists():
        raise MissingMediaError(str(path))
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise MalformedRecordError(f"{path}: invalid JSON: {exc}") from exc

    entries = []
    seen = set()
    for rec in doc.get("entries", []):
        try:
            pid = ParticipantId.parse(rec["participant"])
            voice_ref = rec.get("voice", "")
            portrait_ref = rec.get("portrait", "")
            voice_emb = rec.get("voice_embedding")
            face_emb = rec.get("face_embedding")
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecordError(f"{path}: bad bank entry: {exc}") from exc
        if pid in seen:
            raise DuplicateParticipantError(f"duplicate bank entry for {pid}")
        seen.add(pid)
        if check_media:
            for ref in (voice_ref, portrait_ref):
                if ref and not (directory / ref).exists():
                    raise MissingMediaError(str(directory / ref))
        entries.append(
            ReferencePair(
                participant=pid,
                voice_ref=voice_ref,
                portrait_ref=portrait_ref,
                voice_embedding=None if voice_emb is None else decode_embedding(voice_emb),
                face_embedding=None if face_emb is None else decode_embedding(face_emb),
            )
        )
    return ReferenceBank(
        scene_id=doc.get("scene_id", ""),
        entries=entries,
        enrollment_threshold=float(doc.get("enrollment_threshold", DEFAULT_ENROLLMENT_THRESHOLD)),
    )


def banks_equal(a: ReferenceBank, b: ReferenceBank) -> bool:
    """Logical equality: same scene, threshold, and entries (embeddings bit-exact)."""
    if a.scene_id != b.scene_id or a.enrollment_threshold != b.enrollment_threshold:
        return False
    if len(a.entries) != len(b.entries):
        return False
    for ea, eb in zip(a.entries, b.entries):
        if (ea.participant, ea.voice_ref, ea.portrait_ref) != (eb.participant, eb.voice_ref, eb.portrait_ref):
            return False
        for va, vb in ((ea.voice_embedding, eb.voice_embedding), (ea.face_embedding, eb.face_embedding)):
            if (va is None) != (vb is None):
                return False
            if va is not None and (va.shape != vb.shape or not np.array_equal(va, vb)):
                return False
    return True
