"""Replay backends: adapters that read pre-computed sidecar files.

Sidecars sit next to the media file they describe:

    <audio>.transcript.jsonl       {"start_s", "end_s", "text"} per line
    <audio>.utt_embeddings.json    {"<utterance index>": {dim, data}} (base64 float64)
    <audio>.embedding.json         single reference embedding
    <image>.detections.jsonl       {"box": [x0, y0, x1, y1]} per line
    <image>.box_embeddings.json    {"<box index>": {dim, data}}
    <image>.embedding.json         single reference embedding

This lets any externally processed corpus drive the pipeline.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Sequence

import numpy as np

from ..bank import decode_embedding
from ..core import BoundingBox, Utterance
from ..errors import MalformedRecordError, MissingMediaError


def _read_jsonl(path: Path) -> list:
    if not path.exists():
        raise MissingMediaError(str(path))
    rows = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rows.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(f"{path}:{lineno}: invalid JSON") from exc
    return rows


def _read_keyed_embeddings(path: Path) -> dict:
    if not path.exists():
        raise MissingMediaError(str(path))
    doc = json.loads(path.read_text(encoding="utf-8"))
    return {int(k): decode_embedding(v) for k, v in doc.items()}


class ReplayTranscriber:
    thread_safe = True

    def transcribe(self, audio_ref: str) -> list:
        rows = _read_jsonl(Path(str(audio_ref) + ".transcript.jsonl"))
        try:
            utterances = [Utterance(r["start_s"], r["end_s"], r["text"]) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecordError(f"bad transcript row: {exc}") from exc
        utterances.sort(key=lambda u: u.start_s)
        # intervals may overlap (cross-talk) but start times must be distinct
        starts = [u.start_s for u in utterances]
        if len(set(starts)) != len(starts):
            raise MalformedRecordError(f"{audio_ref}: duplicate utterance start times")
        return utterances


class ReplayDetector:
    thread_safe = True

    def detect_persons(self, image_ref: str) -> list:
        rows = _read_jsonl(Path(str(image_ref) + ".detections.jsonl"))
        try:
            return [BoundingBox(*r["box"]) for r in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise MalformedRecordError(f"bad detection row: {exc}") from exc


class ReplayAudioEmbedder:
    thread_safe = True

    def __init__(self, dim: int = 32):
        self.dim = dim

    def embed_reference_voice(self, audio_ref: str) -> np.ndarray:
        path = Path(str(audio_ref) + ".embedding.json")
        if not path.exists():
            raise MissingMediaError(str(path))
        return decode_embedding(json.loads(path.read_text(encoding="utf-8")))

    def embed_utterances(self, audio_ref: str, utterances: Sequence[Utterance]) -> list:
        table = _read_keyed_embeddings(Path(str(audio_ref) + ".utt_embeddings.json"))
        return [table[i] for i in range(len(utterances))]


class ReplayVisualEmbedder:
    thread_safe = True

    def __init__(self, dim: int = 32):
        self.dim = dim

    def embed_reference_portrait(self, image_ref: str) -> np.ndarray:
        path = Path(str(image_ref) + ".embedding.json")
        if not path.exists():
            raise MissingMediaError(str(path))
        return decode_embedding(json.loads(path.read_text(encoding="utf-8")))

    def embed_crops(self, image_ref: str, boxes: Sequence[BoundingBox]) -> list:
        table = _read_keyed_embeddings(Path(str(image_ref) + ".box_embeddings.json"))
        return [table[i] for i in range(len(boxes))]
