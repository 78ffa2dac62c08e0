"""Attribution-accuracy metrics, referent accuracy, and report arithmetic.

Matching is one-to-one with a strict score threshold: a pair is admissible
only when its score strictly exceeds the threshold (0.9 by default for both
sentence similarity and IoU). Among admissible pairs the matcher returns the
maximum-cardinality assignment with the greatest total score, which is what
the exhaustive small-instance oracle computes; empty match sets make the
corresponding accuracy N/A rather than zero.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .attribution import cosine
from .core import BoundingBox, ParticipantId, SocialCueSet
from .errors import MalformedRecordError
from .manifest import cue_set_from_json, cue_set_to_json

TAU_SEM = 0.9
TAU_IOU = 0.9


@dataclass(frozen=True)
class EvalRecord:
    sample_id: str
    predicted_referent: Optional[ParticipantId]
    gold_referent: ParticipantId
    predicted_cues: SocialCueSet
    gold_cues: SocialCueSet


@dataclass(frozen=True)
class MatchSet:
    """One-to-one (pred index, gold index) pairs for one cue kind."""

    pairs: tuple
    kind: str  # "verbal" | "nonverbal"

    def __post_init__(self):
        preds = [p for p, _ in self.pairs]
        golds = [g for _, g in self.pairs]
        if len(set(preds)) != len(preds) or len(set(golds)) != len(golds):
            raise ValueError("match set is not one-to-one")


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union; 0 for disjoint boxes."""
    ix = max(0.0, min(a.x_max, b.x_max) - max(a.x_min, b.x_min))
    iy = max(0.0, min(a.y_max, b.y_max) - max(a.y_min, b.y_min))
    inter = ix * iy
    union = a.area + b.area - inter
    return inter / union if union > 0 else 0.0


def _optimal_matching(scores: np.ndarray, threshold: float) -> list:
    """Max-cardinality, then max-total-score one-to-one pairs with score > threshold."""
    n_pred, n_gold = scores.shape
    if n_pred == 0 or n_gold == 0:
        return []
    admissible = scores > threshold
    if not admissible.any():
        return []
    # Boost admissible edges so cardinality dominates total score: each extra
    # admissible edge is worth more than any achievable score difference.
    boost = 2.0 * (min(n_pred, n_gold) + 1)
    weights = np.where(admissible, scores + boost, 0.0)
    rows, cols = linear_sum_assignment(weights, maximize=True)
    pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if admissible[r, c]]
    pairs.sort()
    return pairs


def match_utterances(pred, gold, text_embedder, tau_sem: float = TAU_SEM) -> MatchSet:
    """Match predicted to gold utterances by sentence-embedding cosine > tau."""
    scores = np.zeros((len(pred), len(gold)), dtype=np.float64)
    pred_emb = [text_embedder.embed_text(p.utterance.text) for p in pred]
    gold_emb = [text_embedder.embed_text(g.utterance.text) for g in gold]
    for i, pe in enumerate(pred_emb):
        for j, ge in enumerate(gold_emb):
            scores[i, j] = cosine(pe, ge)
    return MatchSet(pairs=tuple(_optimal_matching(scores, tau_sem)), kind="verbal")


def match_boxes(pred, gold, tau_iou: float = TAU_IOU) -> MatchSet:
    """Match predicted to gold detections by IoU > tau."""
    scores = np.zeros((len(pred), len(gold)), dtype=np.float64)
    for i, p in enumerate(pred):
        for j, g in enumerate(gold):
            scores[i, j] = iou(p.box, g.box)
    return MatchSet(pairs=tuple(_optimal_matching(scores, tau_iou)), kind="nonverbal")


def verbal_attribution_accuracy(match: MatchSet, pred, gold) -> Optional[float]:
    """Fraction of matched pairs whose speakers agree; None when nothing matched."""
    if not match.pairs:
        return None
    hits = sum(1 for i, j in match.pairs if pred[i].speaker == gold[j].speaker)
    return hits / len(match.pairs)


def nonverbal_attribution_accuracy(match: MatchSet, pred, gold) -> Optional[float]:
    """Fraction of matched pairs whose visual identities agree; None when empty."""
    if not match.pairs:
        return None
    hits = sum(1 for i, j in match.pairs if pred[i].identity == gold[j].identity)
    return hits / len(match.pairs)


def referent_accuracy(records: Sequence[EvalRecord]) -> float:
    """Mean exact-match rate of predicted vs gold referent."""
    if not records:
        raise ValueError("referent accuracy undefined for no records")
    hits = sum(1 for r in records if r.predicted_referent == r.gold_referent)
    return hits / len(records)


@dataclass
class EvalSummary:
    n_samples: int
    verbal_matched: int
    verbal_correct: int
    nonverbal_matched: int
    nonverbal_correct: int
    referent_acc: Optional[float]  # None when no referent predictions exist
    cue_set_acc: Optional[float] = None  # fraction of samples with fully correct cue sets
    per_sample_mean: bool = False
    verbal_acc: Optional[float] = field(init=False, default=None)
    nonverbal_acc: Optional[float] = field(init=False, default=None)

    def __post_init__(self):
        if self.verbal_matched:
            self.verbal_acc = self.verbal_correct / self.verbal_matched
        if self.nonverbal_matched:
            self.nonverbal_acc = self.nonverbal_correct / self.nonverbal_matched

    def na_metrics(self) -> list:
        """Metrics that were computed over this run but came out undefined."""
        out = []
        if self.verbal_acc is None:
            out.append("verbal")
        if self.nonverbal_acc is None:
            out.append("nonverbal")
        return out

    def has_na(self) -> bool:
        return bool(self.na_metrics())


def evaluate_records(
    records: Sequence[EvalRecord],
    text_embedder,
    tau_sem: float = TAU_SEM,
    tau_iou: float = TAU_IOU,
    per_sample_mean: bool = False,
) -> EvalSummary:
    """Score a corpus. Matched pairs pool corpus-wide by default; the
    per-sample-mean flag averages per-sample accuracies instead (samples with
    empty matches drop out of that mean)."""
    v_matched = v_correct = n_matched = n_correct = 0
    v_means, n_means = [], []
    perfect = 0
    for rec in records:
        vm = match_utterances(rec.predicted_cues.verbal, rec.gold_cues.verbal, text_embedder, tau_sem)
        nm = match_boxes(rec.predicted_cues.nonverbal, rec.gold_cues.nonverbal, tau_iou)
        va = verbal_attribution_accuracy(vm, rec.predicted_cues.verbal, rec.gold_cues.verbal)
        na = nonverbal_attribution_accuracy(nm, rec.predicted_cues.nonverbal, rec.gold_cues.nonverbal)
        vc = sum(1 for i, j in vm.pairs if rec.predicted_cues.verbal[i].speaker == rec.gold_cues.verbal[j].speaker)
        nc = sum(1 for i, j in nm.pairs if rec.predicted_cues.nonverbal[i].identity == rec.gold_cues.nonverbal[j].identity)
        v_matched += len(vm.pairs)
        v_correct += vc
        n_matched += len(nm.pairs)
        n_correct += nc
        # A sample's cue set is fully correct when every gold cue is matched,
        # nothing spurious was predicted, and every matched identity agrees.
        if (
            len(vm.pairs) == len(rec.gold_cues.verbal) == len(rec.predicted_cues.verbal)
            and len(nm.pairs) == len(rec.gold_cues.nonverbal) == len(rec.predicted_cues.nonverbal)
            and vc == len(vm.pairs)
            and nc == len(nm.pairs)
        ):
            perfect += 1
        if va is not None:
            v_means.append(va)
        if na is not None:
            n_means.append(na)

    any_referent = any(r.predicted_referent is not None for r in records)
    referent = referent_accuracy(records) if records and any_referent else None
    summary = EvalSummary(
        n_samples=len(records),
        verbal_matched=v_matched,
        verbal_correct=v_correct,
        nonverbal_matched=n_matched,
        nonverbal_correct=n_correct,
        referent_acc=referent,
        cue_set_acc=perfect / len(records) if records else None,
        per_sample_mean=per_sample_mean,
    )
    if per_sample_mean:
        summary.verbal_acc = sum(v_means) / len(v_means) if v_means else None
        summary.nonverbal_acc = sum(n_means) / len(n_means) if n_means else None
    return summary


# ---------------------------------------------------------------------------
# Record file I/O (line-delimited JSON mirroring EvalRecord).


def write_records(records: Sequence[EvalRecord], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for r in records:
            obj = {
                "sample_id": r.sample_id,
                "predicted_referent": r.predicted_referent.render() if r.predicted_referent else None,
                "gold_referent": r.gold_referent.render(),
                "predicted_cues": cue_set_to_json(r.predicted_cues),
                "gold_cues": cue_set_to_json(r.gold_cues),
            }
            f.write(json.dumps(obj, sort_keys=True) + "\n")


def read_records(path: Path) -> list:
    records = []
    with Path(path).open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                records.append(
                    EvalRecord(
                        sample_id=obj["sample_id"],
                        predicted_referent=(
                            ParticipantId.parse(obj["predicted_referent"]) if obj.get("predicted_referent") else None
                        ),
                        gold_referent=ParticipantId.parse(obj["gold_referent"]),
                        predicted_cues=cue_set_from_json(obj["predicted_cues"]),
                        gold_cues=cue_set_from_json(obj["gold_cues"]),
                    )
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise MalformedRecordError(f"{path}:{lineno}: {exc}") from exc
    return records


# ---------------------------------------------------------------------------
# Report aggregation (the tables' Avg arithmetic).


def round_half_up(value, places: int = 2) -> Decimal:
    """Decimal round-half-up on the printed value, so 43.055 -> 43.06."""
    d = value if isinstance(value, Decimal) else Decimal(str(value))
    quantum = Decimal(1).scaleb(-places)
    return d.quantize(quantum, rounding=ROUND_HALF_UP)


@dataclass(frozen=True)
class ReportTable:
    columns: tuple  # task columns, Avg appended
    rows: tuple  # (name, tuple of formatted strings)


def aggregate_report(columns: Sequence[str], rows: Sequence) -> ReportTable:
    """Append a per-row Avg of the task cells, all rendered at 2 decimals.

    `rows` holds (name, values) with one value per column; every value is
    treated as an already-printed percentage (averaged exactly via Decimal).
    """
    if not columns:
        raise ValueError("need at least one task column")
    out_rows = []
    for name, values in rows:
        if len(values) != len(columns):
            raise ValueError(f"row {name!r} has {len(values)} cells for {len(columns)} columns")
        cells = [Decimal(str(v)) for v in values]
        avg = sum(cells) / Decimal(len(cells))
        rendered = [str(round_half_up(c)) for c in cells] + [str(round_half_up(avg))]
        out_rows.append((name, tuple(rendered)))
    return ReportTable(columns=tuple(columns) + ("Avg",), rows=tuple(out_rows))


def render_table_text(table: ReportTable, row_header: str = "Pipeline") -> str:
    names = [row_header] + [name for name, _ in table.rows]
    widths = [max(len(n) for n in names)]
    for j, col in enumerate(table.columns):
        widths.append(max(len(col), *(len(r[1][j]) for r in table.rows)) if table.rows else len(col))
    header = "  ".join([row_header.ljust(widths[0])] + [c.rjust(widths[j + 1]) for j, c in enumerate(table.columns)])
    lines = [header, "-" * len(header)]
    for name, cells in table.rows:
        lines.append("  ".join([name.ljust(widths[0])] + [c.rjust(widths[j + 1]) for j, c in enumerate(cells)]))
    return "\n".join(lines) + "\n"


def write_table_csv(table: ReportTable, path: Path, row_header: str = "Pipeline") -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow([row_header, *table.columns])
        for name, cells in table.rows:
            writer.writerow([name, *cells])
