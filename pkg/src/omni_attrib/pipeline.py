"""Drivers that run the tool chain over manifest entries.

extract_cues: transcribe + detect + embed + attribute one segment against a
bank. evaluate_manifest: run extraction for every manifest entry and score
predictions against the embedded gold cues.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

from .adapters.base import AdapterRegistry
from .attribution import POLICY_INDEPENDENT, AttributionResult, build_cue_set
from .bank import ReferenceBank, ReferencePair, get_references
from .core import QuerySegment
from .evaluation import EvalRecord, EvalSummary, evaluate_records
from .manifest import ManifestEntry


def _resolve(base_dir: Optional[Path], ref: str) -> str:
    if base_dir is None:
        return ref
    p = Path(ref)
    return ref if p.is_absolute() else str(Path(base_dir) / p)


def resolve_reference_embeddings(
    bank: ReferenceBank, roster, registry: AdapterRegistry, bank_dir: Optional[Path] = None
) -> list:
    """Reference pairs in roster order with embeddings present: stored ones
    are used as-is, missing ones are computed from the reference media."""
    pairs = get_references(bank, roster)
    out = []
    for pair in pairs:
        voice = pair.voice_embedding
        face = pair.face_embedding
        if voice is None:
            voice = registry.audio_embedder.embed_reference_voice(_resolve(bank_dir, pair.voice_ref))
        if face is None:
            face = registry.visual_embedder.embed_reference_portrait(_resolve(bank_dir, pair.portrait_ref))
        out.append(
            ReferencePair(
                participant=pair.participant,
                voice_ref=pair.voice_ref,
                portrait_ref=pair.portrait_ref,
                voice_embedding=voice,
                face_embedding=face,
            )
        )
    return out


@dataclass
class ExtractionOutput:
    segment: QuerySegment
    references: list
    result: AttributionResult


def extract_cues(
    segment: QuerySegment,
    bank: ReferenceBank,
    registry: AdapterRegistry,
    policy: str = POLICY_INDEPENDENT,
    bank_dir: Optional[Path] = None,
) -> ExtractionOutput:
    """The full tool chain for one segment: who speaks what, and where they are."""
    references = resolve_reference_embeddings(bank, segment.roster, registry, bank_dir)
    utterances = registry.transcriber.transcribe(segment.audio_ref)
    utt_embs = registry.audio_embedder.embed_utterances(segment.audio_ref, utterances) if utterances else []
    boxes = registry.detector.detect_persons(segment.video_ref)
    box_embs = registry.visual_embedder.embed_crops(segment.video_ref, boxes) if boxes else []
    result = build_cue_set(utterances, utt_embs, boxes, box_embs, references, policy=policy)
    return ExtractionOutput(segment=segment, references=references, result=result)


def records_from_extractions(
    entries: Sequence[ManifestEntry],
    extractions: Sequence[ExtractionOutput],
    predicted_referents: Optional[dict] = None,
) -> list:
    predicted_referents = predicted_referents or {}
    records = []
    for entry, ext in zip(entries, extractions):
        records.append(
            EvalRecord(
                sample_id=entry.segment.sample_id,
                predicted_referent=predicted_referents.get(entry.segment.sample_id),
                gold_referent=entry.segment.gold_referent,
                predicted_cues=ext.result.cue_set,
                gold_cues=entry.gold_cues,
            )
        )
    return records


def evaluate_manifest(
    entries: Sequence[ManifestEntry],
    bank: ReferenceBank,
    registry: AdapterRegistry,
    policy: str = POLICY_INDEPENDENT,
    bank_dir: Optional[Path] = None,
    predicted_referents: Optional[dict] = None,
    per_sample_mean: bool = False,
) -> EvalSummary:
    extractions = [extract_cues(e.segment, bank, registry, policy, bank_dir) for e in entries]
    records = records_from_extractions(entries, extractions, predicted_referents)
    return evaluate_records(records, registry.text_embedder, per_sample_mean=per_sample_mean)
