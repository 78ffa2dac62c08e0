"""Identity attribution by cosine similarity against reference embeddings.

Each utterance embedding is scored against every reference voice embedding and
each detection-crop embedding against every reference portrait embedding; the
highest-similarity reference wins (ties go to the lowest participant index).
The one-to-one policy instead solves the optimal assignment so no identity is
reused while total similarity is maximized.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .bank import ReferencePair
from .core import (
    AttributedDetection,
    AttributedUtterance,
    BoundingBox,
    ParticipantId,
    SocialCueSet,
    Utterance,
)
from .errors import DimensionMismatchError, EmptyRosterError, ZeroEmbeddingError

POLICY_INDEPENDENT = "independent"
POLICY_ONE_TO_ONE = "one_to_one"


@dataclass(frozen=True)
class AttributionResult:
    """Attributed cues plus the full per-item similarity vectors for audit.

    Under policy=independent each chosen identity is an argmax of its score
    vector; policy=one_to_one deliberately relaxes that so identities are not
    reused within a frame.
    """

    cue_set: SocialCueSet
    utterance_scores: tuple  # one score vector per utterance, roster order
    detection_scores: tuple  # one score vector per detection, roster order
    policy: str = POLICY_INDEPENDENT


def _as_vector(v, name: str = "embedding") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatchError(f"{name} must be a 1-d vector, got shape {arr.shape}")
    return arr


def cosine(u, v) -> float:
    """dot(u, v) / (|u| |v|), in [-1, 1]. Errors on zero norms or dim mismatch."""
    a = _as_vector(u, "u")
    b = _as_vector(v, "v")
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        raise ZeroEmbeddingError("cosine similarity undefined for zero-norm vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def _score_vector(embedding, references: Sequence[np.ndarray]) -> np.ndarray:
    emb = _as_vector(embedding)
    return np.array([cosine(emb, ref) for ref in references], dtype=np.float64)


def _argmax_lowest_index(scores: np.ndarray) -> int:
    # np.argmax already returns the first (lowest-index) maximum.
    return int(np.argmax(scores))


def attribute_speaker(embedding, references: Sequence[ReferencePair]):
    """Pick the reference voice with the highest cosine similarity.

    Returns (ParticipantId, similarity). Ties break to the lowest index.
    """
    if not references:
        raise EmptyRosterError("no references to attribute against")
    voices = [_require(r.voice_embedding, f"{r.participant} voice embedding") for r in references]
    scores = _score_vector(embedding, voices)
    k = _argmax_lowest_index(scores)
    return references[k].participant, float(scores[k])


def attribute_detection(embedding, references: Sequence[ReferencePair]):
    """As attribute_speaker, over reference portrait embeddings."""
    if not references:
        raise EmptyRosterError("no references to attribute against")
    faces = [_require(r.face_embedding, f"{r.participant} face embedding") for r in references]
    scores = _score_vector(embedding, faces)
    k = _argmax_lowest_index(scores)
    return references[k].participant, float(scores[k])


def _require(emb, what: str) -> np.ndarray:
    if emb is None:
        raise ZeroEmbeddingError(f"missing {what}")
    return _as_vector(emb, what)


def one_to_one_assign(score_matrix: np.ndarray) -> list:
    """Optimal one-to-one assignment: max cardinality, then max total score.

    Rows are items, columns references. Returns the chosen column per row.
    When rows outnumber columns the unassigned rows fall back to their own
    argmax (identity reuse is unavoidable there).
    """
    n_items, n_refs = score_matrix.shape
    rows, cols = linear_sum_assignment(score_matrix, maximize=True)
    chosen = [-1] * n_items
    for r, c in zip(rows, cols):
        chosen[r] = int(c)
    for r in range(n_items):
        if chosen[r] == -1:
            chosen[r] = _argmax_lowest_index(score_matrix[r])
    return chosen


def build_cue_set(
    utterances: Sequence[Utterance],
    utterance_embeddings: Sequence,
    boxes: Sequence[BoundingBox],
    box_embeddings: Sequence,
    references: Sequence[ReferencePair],
    policy: str = POLICY_INDEPENDENT,
) -> AttributionResult:
    """Attribute every utterance and detection against the references.

    Utterances always use per-item argmax; the policy only governs boxes,
    where one_to_one forbids identity reuse (people cannot appear twice in
    one frame) via an optimal assignment.
    """
    if policy not in (POLICY_INDEPENDENT, POLICY_ONE_TO_ONE):
        raise ValueError(f"unknown attribution policy: {policy!r}")
    if len(utterances) != len(utterance_embeddings):
        raise DimensionMismatchError("utterances and embeddings are not aligned")
    if len(boxes) != len(box_embeddings):
        raise DimensionMismatchError("boxes and embeddings are not aligned")
    if not references:
        raise EmptyRosterError("no references to attribute against")

    voices = [_require(r.voice_embedding, f"{r.participant} voice embedding") for r in references]
    faces = [_require(r.face_embedding, f"{r.participant} face embedding") for r in references]

    # Keep utterances chronological so cue-set order and score order agree.
    order = sorted(range(len(utterances)), key=lambda i: utterances[i].start_s)
    utterances = [utterances[i] for i in order]
    utterance_embeddings = [utterance_embeddings[i] for i in order]

    utt_scores = [_score_vector(e, voices) for e in utterance_embeddings]
    verbal = []
    for utt, scores in zip(utterances, utt_scores):
        k = _argmax_lowest_index(scores)
        conf = float(np.clip((scores[k] + 1.0) / 2.0, 0.0, 1.0))
        verbal.append(AttributedUtterance(utt, references[k].participant, conf))

    det_scores = [_score_vector(e, faces) for e in box_embeddings]
    nonverbal = []
    if boxes:
        if policy == POLICY_INDEPENDENT:
            chosen = [_argmax_lowest_index(s) for s in det_scores]
        else:
            chosen = one_to_one_assign(np.stack(det_scores))
        for box, scores, k in zip(boxes, det_scores, chosen):
            conf = float(np.clip((scores[k] + 1.0) / 2.0, 0.0, 1.0))
            nonverbal.append(AttributedDetection(box, references[k].participant, conf))

    cue_set = SocialCueSet(verbal, nonverbal)
    return AttributionResult(
        cue_set=cue_set,
        utterance_scores=tuple(np.asarray(s) for s in utt_scores),
        detection_scores=tuple(np.asarray(s) for s in det_scores),
        policy=policy,
    )


def dump_attribution(result: AttributionResult, path: Path) -> None:
    """Write the audit dump: one JSON line per attributed item."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for i, (att, scores) in enumerate(zip(result.cue_set.verbal, result.utterance_scores)):
            f.write(
                json.dumps(
                    {
                        "kind": "utterance",
                        "index": i,
                        "chosen": att.speaker.render(),
                        "scores": [float(s) for s in scores],
                    }
                )
                + "\n"
            )
        for i, (att, scores) in enumerate(zip(result.cue_set.nonverbal, result.detection_scores)):
            f.write(
                json.dumps(
                    {
                        "kind": "detection",
                        "index": i,
                        "chosen": att.identity.render(),
                        "scores": [float(s) for s in scores],
                    }
                )
                + "\n"
            )
