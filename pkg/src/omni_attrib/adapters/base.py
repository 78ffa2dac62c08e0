"""Adapter contracts for the external models the pipeline wraps.

Real transcribers, detectors, and embedders live out of tree; this repo ships
deterministic synthetic backends and file-replay backends behind the same
contracts. Pipeline code must only ever touch these interfaces.

Adapters declare whether they tolerate concurrent calls via `thread_safe`;
the pipeline serializes calls to any adapter that says it does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

import numpy as np

from ..core import BoundingBox, Utterance


@runtime_checkable
class Transcriber(Protocol):
    thread_safe: bool

    def transcribe(self, audio_ref: str) -> list:
        """Chronological utterances with strictly increasing start times.

        Intervals may overlap (overlapping speech); empty audio yields []."""
        ...


@runtime_checkable
class PersonDetector(Protocol):
    thread_safe: bool

    def detect_persons(self, image_ref: str) -> list:
        """Valid boxes on the given frame; misses and false positives allowed."""
        ...


@runtime_checkable
class AudioEmbedder(Protocol):
    thread_safe: bool
    dim: int

    def embed_reference_voice(self, audio_ref: str) -> np.ndarray: ...

    def embed_utterances(self, audio_ref: str, utterances: Sequence[Utterance]) -> list: ...


@runtime_checkable
class VisualEmbedder(Protocol):
    thread_safe: bool
    dim: int

    def embed_reference_portrait(self, image_ref: str) -> np.ndarray: ...

    def embed_crops(self, image_ref: str, boxes: Sequence[BoundingBox]) -> list: ...


@runtime_checkable
class TextEmbedder(Protocol):
    thread_safe: bool
    dim: int

    def embed_text(self, text: str) -> np.ndarray: ...


@dataclass
class AdapterRegistry:
    """The five tool slots the pipeline needs, all bound before execution."""

    transcriber: Transcriber
    detector: PersonDetector
    audio_embedder: AudioEmbedder
    visual_embedder: VisualEmbedder
    text_embedder: TextEmbedder

    def __post_init__(self):
        for slot in ("transcriber", "detector", "audio_embedder", "visual_embedder", "text_embedder"):
            if getattr(self, slot) is None:
                raise ValueError(f"adapter slot not bound: {slot}")
        for slot in ("audio_embedder", "visual_embedder", "text_embedder"):
            dim = getattr(getattr(self, slot), "dim", 0)
            if dim <= 0:
                raise ValueError(f"{slot} must declare a positive output dimension")
