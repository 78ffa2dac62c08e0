from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from omni_attrib.adapters import (
    AdapterRegistry,
    SyntheticAudioEmbedder,
    SyntheticDetector,
    SyntheticSceneSpec,
    SyntheticTranscriber,
    SyntheticVisualEmbedder,
    TokenOverlapTextEmbedder,
    synthesize_scene,
)


def scene_registry(scene) -> AdapterRegistry:
    return AdapterRegistry(
        transcriber=SyntheticTranscriber().register_scene(scene),
        detector=SyntheticDetector().register_scene(scene),
        audio_embedder=SyntheticAudioEmbedder(scene),
        visual_embedder=SyntheticVisualEmbedder(scene),
        text_embedder=TokenOverlapTextEmbedder(),
    )


@pytest.fixture
def clean_scene():
    return synthesize_scene(SyntheticSceneSpec(n_participants=4, n_utterances=12, embedding_dim=16, seed=11))
