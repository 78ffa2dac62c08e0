"""Adapter contracts plus the synthetic and replay backends shipped in-tree."""

from __future__ import annotations

from .base import (
    AdapterRegistry,
    AudioEmbedder,
    PersonDetector,
    TextEmbedder,
    Transcriber,
    VisualEmbedder,
)
from .replay import ReplayAudioEmbedder, ReplayDetector, ReplayTranscriber, ReplayVisualEmbedder
from .synthetic import (
    GridVisualEmbedder,
    SceneObservations,
    SpectralAudioEmbedder,
    SyntheticAudioEmbedder,
    SyntheticDetector,
    SyntheticScene,
    SyntheticSceneSpec,
    SyntheticTranscriber,
    SyntheticVisualEmbedder,
    TokenOverlapTextEmbedder,
    materialize_scene,
    synthesize_scene,
)


def _parse_binding(text: str):
    """'name:k=v,k=v' -> (name, {k: v}) with ints parsed where possible."""
    name, _, rest = text.partition(":")
    opts = {}
    if rest:
        for piece in rest.split(","):
            k, _, v = piece.partition("=")
            try:
                opts[k] = int(v)
            except ValueError:
                opts[k] = v
    return name, opts


def build_registry(bindings: dict) -> AdapterRegistry:
    """Build a registry from config strings, e.g. {'transcriber': 'replay',
    'audio_embedder': 'replay:dim=32', 'visual_embedder': 'grid:grid=8',
    'text_embedder': 'token:dim=256'}."""

    def transcriber(spec: str):
        name, _ = _parse_binding(spec)
        if name == "replay":
            return ReplayTranscriber()
        raise ValueError(f"unknown transcriber binding: {spec!r}")

    def detector(spec: str):
        name, _ = _parse_binding(spec)
        if name == "replay":
            return ReplayDetector()
        raise ValueError(f"unknown detector binding: {spec!r}")

    def audio_embedder(spec: str):
        name, opts = _parse_binding(spec)
        if name == "replay":
            return ReplayAudioEmbedder(dim=opts.get("dim", 32))
        if name == "spectral":
            return SpectralAudioEmbedder(dim=opts.get("dim", 32))
        raise ValueError(f"unknown audio embedder binding: {spec!r}")

    def visual_embedder(spec: str):
        name, opts = _parse_binding(spec)
        if name == "replay":
            return ReplayVisualEmbedder(dim=opts.get("dim", 32))
        if name == "grid":
            return GridVisualEmbedder(grid=opts.get("grid", 8))
        raise ValueError(f"unknown visual embedder binding: {spec!r}")

    def text_embedder(spec: str):
        name, opts = _parse_binding(spec)
        if name == "token":
            return TokenOverlapTextEmbedder(dim=opts.get("dim", 256))
        raise ValueError(f"unknown text embedder binding: {spec!r}")

    return AdapterRegistry(
        transcriber=transcriber(bindings.get("transcriber", "replay")),
        detector=detector(bindings.get("detector", "replay")),
        audio_embedder=audio_embedder(bindings.get("audio_embedder", "replay:dim=32")),
        visual_embedder=visual_embedder(bindings.get("visual_embedder", "replay:dim=32")),
        text_embedder=text_embedder(bindings.get("text_embedder", "token:dim=256")),
    )
