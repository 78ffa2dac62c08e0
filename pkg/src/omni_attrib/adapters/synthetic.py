"""Deterministic synthetic scenes: the test substrate for the whole pipeline.

A scene is a pure function of its spec (seed included): scripted utterances,
planted last-frame boxes, reference embeddings, and noisy observation
embeddings. `materialize_scene` additionally renders real media (signature
tone WAVs, block-pattern portraits, a composed last frame) plus replay
sidecars so the file-based pipeline can run end to end with no real model.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ..bank import ReferenceBank, ReferencePair, encode_embedding, save_bank
from ..core import (
    AttributedDetection,
    AttributedUtterance,
    BoundingBox,
    ParticipantId,
    QuerySegment,
    SocialCueSet,
    TaskKind,
    Utterance,
    make_roster,
)
from ..errors import MissingMediaError
from ..media import SAMPLE_RATE, load_image, read_wav, save_image, write_wav

UTTERANCE_SLOT_S = 1.0
UTTERANCE_LEN_S = 0.8


@dataclass(frozen=True)
class SyntheticSceneSpec:
    n_participants: int
    n_utterances: int
    embedding_dim: int = 32
    identity_noise: float = 0.0
    seed: int = 0
    orthonormal: bool = True
    task: TaskKind = TaskKind.PCR

    def __post_init__(self):
        if self.n_participants < 2:
            raise ValueError("need at least 2 participants")
        if self.n_utterances < 1:
            raise ValueError("need at least 1 utterance")
        if self.embedding_dim < 1:
            raise ValueError("embedding_dim must be positive")
        if self.identity_noise < 0:
            raise ValueError("identity_noise must be >= 0")
        if self.orthonormal and self.embedding_dim < self.n_participants:
            raise ValueError(
                f"cannot build {self.n_participants} orthogonal references in dim {self.embedding_dim}"
            )


@dataclass
class SceneObservations:
    """What the (synthetic) tools would see: script plus noisy embeddings."""

    utterances: list
    utterance_embeddings: list
    true_speakers: list
    boxes: list
    box_embeddings: list
    true_identities: list


@dataclass
class SyntheticScene:
    spec: SyntheticSceneSpec
    segment: QuerySegment
    bank: ReferenceBank
    gold_cues: SocialCueSet
    observations: SceneObservations
    media_dir: Optional[Path] = None


def _unit_rows(rng: np.random.Generator, n: int, dim: int, orthonormal: bool) -> np.ndarray:
    raw = rng.normal(size=(max(n, 1), dim)) if not orthonormal else rng.normal(size=(dim, dim))
    if orthonormal:
        q, _ = np.linalg.qr(raw)
        return q[:, :n].T.copy()
    return raw / np.linalg.norm(raw, axis=1, keepdims=True)


def _participant_boxes(n: int) -> list:
    # Disjoint, strictly left-to-right; cross-IoU is 0 by construction.
    boxes = []
    for j in range(n):
        x0 = j / n + 0.01
        x1 = (j + 1) / n - 0.01
        boxes.append(BoundingBox(round(x0, 4), 0.55, round(x1, 4), 0.95))
    return boxes


def synthesize_scene(spec: SyntheticSceneSpec) -> SyntheticScene:
    """Build a scene deterministically from the spec.

    References are unit vectors (mutually orthogonal when requested) and each
    observation embedding is the true reference plus N(0, identity_noise^2)
    per coordinate. identity_noise = 0 reproduces the references exactly.
    """
    seq = np.random.SeedSequence(spec.seed)
    rng_ref, rng_script, rng_noise, rng_media = [np.random.default_rng(s) for s in seq.spawn(4)]

    n = spec.n_participants
    roster = make_roster(n)
    voice_refs = _unit_rows(rng_ref, n, spec.embedding_dim, spec.orthonormal)
    face_refs = _unit_rows(rng_ref, n, spec.embedding_dim, spec.orthonormal)

    scene_id = f"synthetic-{spec.seed}"
    entries = [
        ReferencePair(
            participant=roster[j],
            voice_ref=f"ref_{j}.wav",
            portrait_ref=f"ref_{j}.png",
            voice_embedding=voice_refs[j].copy(),
            face_embedding=face_refs[j].copy(),
        )
        for j in range(n)
    ]
    bank = ReferenceBank(scene_id=scene_id, entries=entries)

    # Scripted dialogue: unique token per utterance keeps text matching exact.
    speakers = [int(rng_script.integers(0, n)) for _ in range(spec.n_utterances)]
    utterances = []
    for i in range(spec.n_utterances):
        start = round(i * UTTERANCE_SLOT_S, 3)
        end = round(start + UTTERANCE_LEN_S, 3)
        word = f"w{int(rng_script.integers(0, 10_000)):04d}"
        text = f"seg{i:04d} says {word}"
        if i == spec.n_utterances - 1:
            text += " so it was him" if spec.task is TaskKind.PCR else " do you agree"
        utterances.append(Utterance(start, end, text))

    boxes = _participant_boxes(n)
    gold_cues = SocialCueSet(
        [AttributedUtterance(u, roster[s]) for u, s in zip(utterances, speakers)],
        [AttributedDetection(boxes[j], roster[j]) for j in range(n)],
    )

    sigma = spec.identity_noise
    utt_emb = [voice_refs[s] + rng_noise.normal(0.0, sigma, spec.embedding_dim) if sigma > 0 else voice_refs[s].copy() for s in speakers]
    box_emb = [face_refs[j] + rng_noise.normal(0.0, sigma, spec.embedding_dim) if sigma > 0 else face_refs[j].copy() for j in range(n)]

    last_speaker = speakers[-1]
    others = [j for j in range(n) if j != last_speaker]
    gold_referent = roster[int(others[int(rng_script.integers(0, len(others)))])]

    duration = spec.n_utterances * UTTERANCE_SLOT_S
    segment = QuerySegment(
        sample_id=f"{scene_id}-q0",
        audio_ref=f"synthetic://{scene_id}/query.wav",
        video_ref=f"synthetic://{scene_id}/last_frame.png",
        duration_s=duration,
        turn_count=spec.n_utterances,
        task=spec.task,
        roster=roster,
        gold_referent=gold_referent,
    )

    observations = SceneObservations(
        utterances=list(utterances),
        utterance_embeddings=utt_emb,
        true_speakers=[roster[s] for s in speakers],
        boxes=list(boxes),
        box_embeddings=box_emb,
        true_identities=list(roster),
    )
    return SyntheticScene(spec=spec, segment=segment, bank=bank, gold_cues=gold_cues, observations=observations)


# ---------------------------------------------------------------------------
# In-memory adapters that echo a scene's script.


class SyntheticTranscriber:
    thread_safe = True

    def __init__(self):
        self._scripts = {}

    def register(self, audio_ref: str, utterances: Sequence[Utterance]) -> None:
        self._scripts[audio_ref] = list(utterances)

    def register_scene(self, scene: SyntheticScene) -> "SyntheticTranscriber":
        self.register(scene.segment.audio_ref, scene.observations.utterances)
        return self

    def transcribe(self, audio_ref: str) -> list:
        if audio_ref not in self._scripts:
            raise MissingMediaError(audio_ref)
        return list(self._scripts[audio_ref])


class SyntheticDetector:
    thread_safe = True

    def __init__(self, jitter: float = 0.0, seed: int = 0):
        self._frames = {}
        self.jitter = jitter
        self._rng = np.random.default_rng(seed)

    def register(self, image_ref: str, boxes: Sequence[BoundingBox]) -> None:
        self._frames[image_ref] = list(boxes)

    def register_scene(self, scene: SyntheticScene) -> "SyntheticDetector":
        self.register(scene.segment.video_ref, scene.observations.boxes)
        return self

    def detect_persons(self, image_ref: str) -> list:
        if image_ref not in self._frames:
            raise MissingMediaError(image_ref)
        boxes = self._frames[image_ref]
        if self.jitter <= 0:
            return list(boxes)
        out = []
        for b in boxes:
            d = self._rng.normal(0.0, self.jitter, 4)
            x0 = min(max(b.x_min + d[0], 0.0), 1.0)
            y0 = min(max(b.y_min + d[1], 0.0), 1.0)
            x1 = min(max(b.x_max + d[2], 0.0), 1.0)
            y1 = min(max(b.y_max + d[3], 0.0), 1.0)
            if x1 <= x0:
                x0, x1 = b.x_min, b.x_max
            if y1 <= y0:
                y0, y1 = b.y_min, b.y_max
            out.append(BoundingBox(x0, y0, x1, y1))
        return out


class SyntheticAudioEmbedder:
    """Returns the scene's planted observation/reference embeddings."""

    thread_safe = True

    def __init__(self, scene: SyntheticScene):
        self.dim = scene.spec.embedding_dim
        self._scene = scene
        self._refs = {e.voice_ref: e.voice_embedding for e in scene.bank.entries}

    def embed_reference_voice(self, audio_ref: str) -> np.ndarray:
        key = Path(audio_ref).name
        if key not in self._refs:
            raise MissingMediaError(audio_ref)
        return np.array(self._refs[key])

    def embed_utterances(self, audio_ref: str, utterances: Sequence[Utterance]) -> list:
        by_span = {
            (u.start_s, u.end_s): emb
            for u, emb in zip(self._scene.observations.utterances, self._scene.observations.utterance_embeddings)
        }
        return [np.array(by_span[(u.start_s, u.end_s)]) for u in utterances]


class SyntheticVisualEmbedder:
    thread_safe = True

    def __init__(self, scene: SyntheticScene):
        self.dim = scene.spec.embedding_dim
        self._scene = scene
        self._refs = {e.portrait_ref: e.face_embedding for e in scene.bank.entries}

    def embed_reference_portrait(self, image_ref: str) -> np.ndarray:
        key = Path(image_ref).name
        if key not in self._refs:
            raise MissingMediaError(image_ref)
        return np.array(self._refs[key])

    def embed_crops(self, image_ref: str, boxes: Sequence[BoundingBox]) -> list:
        by_box = {
            b: emb for b, emb in zip(self._scene.observations.boxes, self._scene.observations.box_embeddings)
        }
        return [np.array(by_box[b]) for b in boxes]


# ---------------------------------------------------------------------------
# Media-backed embedders (used for degradation sweeps and file pipelines).


class SpectralAudioEmbedder:
    """Log band energies of the waveform spectrum; deterministic, no model."""

    thread_safe = True

    def __init__(self, dim: int = 32):
        self.dim = dim

    def _embed_samples(self, samples: np.ndarray) -> np.ndarray:
        if samples.size == 0:
            samples = np.zeros(16, dtype=np.float64)
        spectrum = np.abs(np.fft.rfft(samples)) ** 2
        bands = np.array_split(spectrum, self.dim)
        energies = np.array([float(b.mean()) if b.size else 0.0 for b in bands])
        emb = np.log1p(energies)
        if not emb.any():
            emb = emb + 1e-9  # all-silent clip still embeds to a tiny non-zero vector
        return emb

    def embed_reference_voice(self, audio_ref: str) -> np.ndarray:
        samples, _ = read_wav(audio_ref)
        return self._embed_samples(samples)

    def embed_utterances(self, audio_ref: str, utterances: Sequence[Utterance]) -> list:
        samples, rate = read_wav(audio_ref)
        out = []
        for u in utterances:
            lo = max(0, int(u.start_s * rate))
            hi = min(samples.size, int(u.end_s * rate))
            out.append(self._embed_samples(samples[lo:hi]))
        return out


class GridVisualEmbedder:
    """Mean-pooled color grid of the crop; deterministic, no model."""

    thread_safe = True

    def __init__(self, grid: int = 8):
        self.grid = grid
        self.dim = grid * grid * 3

    def _pool(self, pixels: np.ndarray) -> np.ndarray:
        h, w = pixels.shape[:2]
        g = self.grid
        ys = np.linspace(0, h, g + 1).astype(int)
        xs = np.linspace(0, w, g + 1).astype(int)
        cells = np.zeros((g, g, 3), dtype=np.float64)
        for i in range(g):
            for j in range(g):
                block = pixels[ys[i]:max(ys[i + 1], ys[i] + 1), xs[j]:max(xs[j + 1], xs[j] + 1)]
                cells[i, j] = block.reshape(-1, 3).mean(axis=0)
        emb = cells.reshape(-1)
        if not emb.any():
            emb = emb + 1e-9
        return emb

    def embed_reference_portrait(self, image_ref: str) -> np.ndarray:
        return self._pool(load_image(image_ref))

    def embed_crops(self, image_ref: str, boxes: Sequence[BoundingBox]) -> list:
        pixels = load_image(image_ref)
        h, w = pixels.shape[:2]
        out = []
        for b in boxes:
            x0, x1 = int(b.x_min * w), max(int(b.x_max * w), int(b.x_min * w) + 1)
            y0, y1 = int(b.y_min * h), max(int(b.y_max * h), int(b.y_min * h) + 1)
            out.append(self._pool(pixels[y0:y1, x0:x1]))
        return out


class TokenOverlapTextEmbedder:
    """Hashed bag-of-tokens embedding; cosine approximates token overlap."""

    thread_safe = True

    def __init__(self, dim: int = 256):
        self.dim = dim

    def embed_text(self, text: str) -> np.ndarray:
        vec = np.zeros(self.dim, dtype=np.float64)
        tokens = {t for t in text.lower().split() if t}
        for tok in tokens:
            digest = hashlib.md5(tok.encode("utf-8")).digest()
            vec[int.from_bytes(digest[:4], "little") % self.dim] += 1.0
        if not vec.any():
            vec[0] = 1.0
        return vec


# ---------------------------------------------------------------------------
# Media materialization.


def _signature_tone(rng: np.random.Generator, participant: int, seconds: float) -> np.ndarray:
    # Fundamentals spread across spectral bands so voices stay separable
    # even under heavy additive noise.
    t = np.arange(int(seconds * SAMPLE_RATE)) / SAMPLE_RATE
    f0 = 350.0 + 290.0 * participant
    wave = 0.45 * np.sin(2 * np.pi * f0 * t) + 0.25 * np.sin(2 * np.pi * 2.1 * f0 * t)
    wave += 0.02 * rng.normal(size=t.size)
    return np.clip(wave, -1.0, 1.0)


def _portrait_pattern(rng: np.random.Generator, size: int = 64, blocks: int = 8) -> np.ndarray:
    colors = rng.integers(20, 236, size=(blocks, blocks, 3), dtype=np.int64).astype(np.uint8)
    return np.kron(colors, np.ones((size // blocks, size // blocks, 1), dtype=np.uint8))


def materialize_scene(scene: SyntheticScene, out_dir: Path) -> SyntheticScene:
    """Render WAV/PNG media plus replay sidecars under out_dir.

    Rewrites the scene's locators to real paths (bank media relative to the
    bank directory, query media under out_dir) and returns the updated scene.
    """
    out_dir = Path(out_dir)
    bank_dir = out_dir / "bank"
    bank_dir.mkdir(parents=True, exist_ok=True)
    seq = np.random.SeedSequence((scene.spec.seed, 0xA11D10))
    rngs = [np.random.default_rng(s) for s in seq.spawn(scene.spec.n_participants + 1)]

    portraits = []
    for j, entry in enumerate(scene.bank.entries):
        tone = _signature_tone(rngs[j], j, 3.0)
        write_wav(bank_dir / entry.voice_ref, tone)
        pattern = _portrait_pattern(rngs[j])
        portraits.append(pattern)
        save_image(bank_dir / entry.portrait_ref, pattern)

    # Query audio: each utterance slot carries its speaker's signature tones.
    total = int(scene.segment.duration_s * SAMPLE_RATE)
    audio = np.zeros(total, dtype=np.float64)
    for utt, speaker in zip(scene.observations.utterances, scene.observations.true_speakers):
        lo = int(utt.start_s * SAMPLE_RATE)
        hi = min(total, int(utt.end_s * SAMPLE_RATE))
        audio[lo:hi] = _signature_tone(rngs[speaker.index], speaker.index, (hi - lo) / SAMPLE_RATE)[: hi - lo]
    audio_path = out_dir / "query.wav"
    write_wav(audio_path, audio)

    # Last frame: portrait patterns pasted into each participant's box.
    from PIL import Image

    H, W = 360, 640
    frame = np.full((H, W, 3), 120, dtype=np.uint8)
    for box, pid in zip(scene.observations.boxes, scene.observations.true_identities):
        x0, x1 = int(box.x_min * W), int(box.x_max * W)
        y0, y1 = int(box.y_min * H), int(box.y_max * H)
        patch = portraits[pid.index]
        resized = np.asarray(
            Image.fromarray(patch).resize((max(x1 - x0, 1), max(y1 - y0, 1)), Image.NEAREST)
        )
        frame[y0:y1, x0:x1] = resized
    frame_path = out_dir / "last_frame.png"
    save_image(frame_path, frame)

    write_sidecars(scene, audio_path, frame_path)

    entries = [
        ReferencePair(
            participant=e.participant,
            voice_ref=e.voice_ref,
            portrait_ref=e.portrait_ref,
            voice_embedding=e.voice_embedding,
            face_embedding=e.face_embedding,
        )
        for e in scene.bank.entries
    ]
    bank = ReferenceBank(
        scene_id=scene.bank.scene_id,
        entries=entries,
        enrollment_threshold=scene.bank.enrollment_threshold,
    )
    save_bank(bank, bank_dir)

    segment = QuerySegment(
        sample_id=scene.segment.sample_id,
        audio_ref=str(audio_path),
        video_ref=str(frame_path),
        duration_s=scene.segment.duration_s,
        turn_count=scene.segment.turn_count,
        task=scene.segment.task,
        roster=scene.segment.roster,
        gold_referent=scene.segment.gold_referent,
    )
    return SyntheticScene(
        spec=scene.spec,
        segment=segment,
        bank=bank,
        gold_cues=scene.gold_cues,
        observations=scene.observations,
        media_dir=out_dir,
    )


def write_sidecars(scene: SyntheticScene, audio_path: Path, frame_path: Path) -> None:
    """Replay sidecars: transcript, detections, and observation embeddings."""
    with Path(str(audio_path) + ".transcript.jsonl").open("w", encoding="utf-8", newline="\n") as f:
        for u in scene.observations.utterances:
            f.write(json.dumps({"start_s": u.start_s, "end_s": u.end_s, "text": u.text}) + "\n")
    with Path(str(frame_path) + ".detections.jsonl").open("w", encoding="utf-8", newline="\n") as f:
        for b in scene.observations.boxes:
            f.write(json.dumps({"box": b.as_list()}) + "\n")
    utt = {str(i): encode_embedding(e) for i, e in enumerate(scene.observations.utterance_embeddings)}
    Path(str(audio_path) + ".utt_embeddings.json").write_text(
        json.dumps(utt, sort_keys=True) + "\n", encoding="utf-8"
    )
    box = {str(i): encode_embedding(e) for i, e in enumerate(scene.observations.box_embeddings)}
    Path(str(frame_path) + ".box_embeddings.json").write_text(
        json.dumps(box, sort_keys=True) + "\n", encoding="utf-8"
    )
