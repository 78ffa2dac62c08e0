"""Minimal media I/O: mono 16 kHz PCM WAV and PNG/JPEG images.

Audio is exchanged as float64 arrays in [-1, 1]; images as uint8 RGB arrays.
"""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MissingMediaError

SAMPLE_RATE = 16000


def write_wav(path: Path, samples, sample_rate: int = SAMPLE_RATE) -> None:
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with wave.open(str(path), "wb") as w:
        w.setnchannels(1)
        w.setsampwidth(2)
        w.setframerate(sample_rate)
        w.writeframes(pcm.tobytes())


def read_wav(path: Path):
    """Returns (samples float64 in [-1, 1], sample_rate). Mono only."""
    path = Path(path)
    if not path.exists():
        raise MissingMediaError(str(path))
    with wave.open(str(path), "rb") as w:
        if w.getnchannels() != 1:
            raise ValueError(f"{path}: expected mono audio, got {w.getnchannels()} channels")
        if w.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM, got {w.getsampwidth() * 8}-bit")
        rate = w.getframerate()
        raw = w.readframes(w.getnframes())
    samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32767.0
    return samples, rate


def trim_clip(samples, sample_rate: int = SAMPLE_RATE, max_seconds: float = 5.0):
    """Keep at most the first max_seconds of audio (reference-clip policy)."""
    samples = np.asarray(samples, dtype=np.float64)
    limit = int(max_seconds * sample_rate)
    return samples[:limit].copy() if samples.size > limit else samples.copy()


def save_image(path: Path, pixels) -> None:
    pixels = np.asarray(pixels, dtype=np.uint8)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(pixels).save(path)


def load_image(path: Path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise MissingMediaError(str(path))
    with Image.open(path) as img:
        return np.asarray(img.convert("RGB"), dtype=np.uint8)
