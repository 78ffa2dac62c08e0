"""Reference degradation: AWGN at target SNR and random occlusion masks.

Noise is scaled by the realized power of the drawn noise, so the measured SNR
of (output - input) vs input equals the target exactly up to float rounding.
Occlusion fills one seeded axis-aligned rectangle (aspect ratio in [0.5, 2])
whose pixel count lands within +-1% of the requested area fraction. Both are
no-ops at their identity settings (clean / ratio 0) and bit-preserving there.
Degradation applies to reference media only; query media are never touched.
"""

from __future__ import annotations

import csv
import math
import shutil
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .bank import ReferenceBank, ReferencePair, load_bank, save_bank
from .errors import ZeroPowerSignalError
from .media import read_wav, write_wav, load_image, save_image

CLEAN = "clean"
SNR_LEVELS = (CLEAN, 20.0, 10.0, 5.0)
OCCLUSION_RATIOS = (0.0, 0.1, 0.3, 0.4)


@dataclass(frozen=True)
class DegradationSpec:
    snr_db: Union[str, float] = CLEAN
    occlusion_ratio: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not (0.0 <= self.occlusion_ratio <= 1.0):
            raise ValueError(f"occlusion ratio outside [0, 1]: {self.occlusion_ratio}")
        if isinstance(self.snr_db, str) and self.snr_db != CLEAN:
            raise ValueError(f"snr_db must be 'clean' or a number, got {self.snr_db!r}")

    @property
    def is_identity(self) -> bool:
        return self.snr_db == CLEAN and self.occlusion_ratio == 0.0


def inject_noise(samples, snr_db: Union[str, float], seed: int = 0):
    """Additive white Gaussian noise at the target SNR (dB).

    'clean' passes the input through bit-identically. Finite SNR on a
    zero-power signal has no defined scaling and raises.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if not np.isfinite(samples).all():
        raise ValueError("audio samples must be finite")
    if snr_db == CLEAN:
        return samples.copy()
    snr_db = float(snr_db)
    p_signal = float(np.mean(samples**2))
    if p_signal <= 0.0:
        raise ZeroPowerSignalError("cannot scale noise against a zero-power signal")
    rng = np.random.default_rng(seed)
    noise = rng.normal(0.0, 1.0, samples.shape)
    p_noise = float(np.mean(noise**2))
    target_noise_power = p_signal / (10.0 ** (snr_db / 10.0))
    noise *= math.sqrt(target_noise_power / p_noise)
    return samples + noise


def realized_snr_db(clean, noisy) -> float:
    """Recompute SNR from the two tracks; the test-side oracle."""
    clean = np.asarray(clean, dtype=np.float64)
    residual = np.asarray(noisy, dtype=np.float64) - clean
    p_signal = float(np.mean(clean**2))
    p_noise = float(np.mean(residual**2))
    if p_noise == 0.0:
        return math.inf
    return 10.0 * math.log10(p_signal / p_noise)


def occlude(image, ratio: float, seed: int = 0):
    """Black out one seeded rectangle covering `ratio` of the image area.

    Ratio 0 returns a bit-identical copy; pixels outside the rectangle are
    never touched. The rectangle's aspect ratio is drawn uniformly from
    [0.5, 2] and its placement uniformly among in-bounds positions.
    """
    if not (0.0 <= ratio <= 1.0):
        raise ValueError(f"occlusion ratio outside [0, 1]: {ratio}")
    pixels = np.asarray(image)
    if pixels.size == 0:
        raise ValueError("cannot occlude an empty image")
    out = pixels.copy()
    if ratio == 0.0:
        return out
    h, w = pixels.shape[:2]
    target = ratio * h * w
    rng = np.random.default_rng(seed)
    aspect = rng.uniform(0.5, 2.0)
    rect_w = max(1, min(w, round(math.sqrt(target * aspect))))
    rect_h = max(1, min(h, round(target / rect_w)))
    if rect_h == h and rect_w < w:  # height clamped: recover area via width
        rect_w = max(1, min(w, round(target / rect_h)))
    x0 = int(rng.integers(0, w - rect_w + 1))
    y0 = int(rng.integers(0, h - rect_h + 1))
    out[y0 : y0 + rect_h, x0 : x0 + rect_w] = 0
    return out


def degrade_bank_media(bank_dir: Path, spec: DegradationSpec, out_dir: Path) -> Path:
    """Copy a bank directory with degraded reference media.

    Stored embeddings are dropped so downstream stages re-embed from the
    degraded media; per-entry seeds derive from (spec.seed, entry index).
    """
    bank = load_bank(bank_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for idx, entry in enumerate(bank.entries):
        voice_ref, portrait_ref = entry.voice_ref, entry.portrait_ref
        if voice_ref:
            samples, rate = read_wav(Path(bank_dir) / voice_ref)
            noisy = inject_noise(samples, spec.snr_db, seed=spec.seed * 7919 + idx)
            write_wav(out_dir / voice_ref, noisy, rate)
        if portrait_ref:
            pixels = load_image(Path(bank_dir) / portrait_ref)
            masked = occlude(pixels, spec.occlusion_ratio, seed=spec.seed * 104729 + idx)
            save_image(out_dir / portrait_ref, masked)
        entries.append(
            ReferencePair(
                participant=entry.participant,
                voice_ref=voice_ref,
                portrait_ref=portrait_ref,
                voice_embedding=None,
                face_embedding=None,
            )
        )
    degraded = ReferenceBank(
        scene_id=bank.scene_id, entries=entries, enrollment_threshold=bank.enrollment_threshold
    )
    save_bank(degraded, out_dir)
    return out_dir


@dataclass(frozen=True)
class SweepRow:
    snr_db: Union[str, float]
    occlusion_ratio: float
    verbal_acc: Optional[float]
    nonverbal_acc: Optional[float]
    referent_acc: Optional[float]
    n_samples: int


def sweep(
    bank_dir: Path,
    snr_levels: Sequence = SNR_LEVELS,
    occlusion_ratios: Sequence[float] = OCCLUSION_RATIOS,
    evaluator: Callable[[Path], tuple] = None,
    seed: int = 0,
    work_dir: Optional[Path] = None,
) -> list:
    """Evaluate the pipeline across the degradation grid.

    `evaluator(bank_dir) -> (verbal, nonverbal, referent, n_samples)` runs the
    downstream pipeline against a (possibly degraded) bank directory. Every
    grid point, the clean one included, re-embeds references from media, so
    the clean row equals the undegraded pipeline exactly.
    """
    if evaluator is None:
        raise ValueError("sweep needs a downstream evaluator")
    if not snr_levels or not occlusion_ratios:
        raise ValueError("degradation grid must be non-empty")
    work_dir = Path(work_dir) if work_dir else Path(bank_dir).parent / "degraded"
    rows = []
    for snr in snr_levels:
        for ratio in occlusion_ratios:
            spec = DegradationSpec(snr_db=snr, occlusion_ratio=float(ratio), seed=seed)
            tag = f"snr_{snr}_occ_{ratio}"
            point_dir = work_dir / tag
            if point_dir.exists():
                shutil.rmtree(point_dir)
            degraded_dir = degrade_bank_media(bank_dir, spec, point_dir)
            verbal, nonverbal, referent, n = evaluator(degraded_dir)
            rows.append(
                SweepRow(
                    snr_db=snr,
                    occlusion_ratio=float(ratio),
                    verbal_acc=verbal,
                    nonverbal_acc=nonverbal,
                    referent_acc=referent,
                    n_samples=n,
                )
            )
    return rows


def write_sweep_csv(rows: Sequence[SweepRow], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["snr_db", "occlusion_ratio", "verbal_acc", "nonverbal_acc", "referent_acc", "n_samples"])
        for r in rows:
            writer.writerow(
                [
                    r.snr_db,
                    r.occlusion_ratio,
                    "" if r.verbal_acc is None else f"{r.verbal_acc:.6f}",
                    "" if r.nonverbal_acc is None else f"{r.nonverbal_acc:.6f}",
                    "" if r.referent_acc is None else f"{r.referent_acc:.6f}",
                    r.n_samples,
                ]
            )


def render_sweep_panels(rows: Sequence[SweepRow], path: Path) -> None:
    """Two-panel summary: accuracy vs SNR (audio) and vs occlusion (visual)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    by_snr = {}
    by_ratio = {}
    for r in rows:
        if r.occlusion_ratio == 0.0 and r.verbal_acc is not None:
            by_snr[r.snr_db] = r.verbal_acc
        if r.snr_db == CLEAN and r.nonverbal_acc is not None:
            by_ratio[r.occlusion_ratio] = r.nonverbal_acc

    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    if by_snr:
        labels = list(by_snr.keys())
        ax1.plot(range(len(labels)), [by_snr[k] * 100 for k in labels], marker="o")
        ax1.set_xticks(range(len(labels)), [str(k) for k in labels])
    ax1.set_xlabel("reference audio SNR (dB)")
    ax1.set_ylabel("verbal attribution acc (%)")
    ax1.set_title("audio degradation")
    if by_ratio:
        ratios = sorted(by_ratio)
        ax2.plot(ratios, [by_ratio[k] * 100 for k in ratios], marker="o")
    ax2.set_xlabel("reference occlusion ratio")
    ax2.set_ylabel("non-verbal attribution acc (%)")
    ax2.set_title("visual degradation")
    fig.tight_layout()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120)
    plt.close(fig)
