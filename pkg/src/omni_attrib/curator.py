"""Generate-and-filter curation of reasoning traces.

A trace survives generation only when its parsed answer equals the sample's
gold referent; generation retries the identical prompt up to 10 times and
then emits a failure record listing every wrong answer. Survivors enter a
review state machine (pending -> accepted | discarded | revised) persisted as
an append-only event log that the review service replays.
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path
from typing import Callable, Optional, Sequence

from .core import ParticipantId, QuerySegment, SocialCueSet, TaskKind
from .errors import (
    ClientError,
    InvalidTransitionError,
    MalformedAnswerError,
    MissingAnswerError,
    OmniAttribError,
    RevisionValidationError,
    UnknownConfigKeyError,
)
from .reasoner import Attachment, PromptMode, infer, prompt_text

MAX_ATTEMPTS = 10

STATUS_PENDING = "pending"
STATUS_ACCEPTED = "accepted"
STATUS_DISCARDED = "discarded"
STATUS_REVISED = "revised"
TERMINAL_STATUSES = {STATUS_ACCEPTED, STATUS_DISCARDED, STATUS_REVISED}

CORRECTION_TYPES = {
    "a": "a_remove_incorrect_nonverbal",
    "b": "b_add_missing_evidence",
    "c": "c_add_other_participants_cues",
}
CORRECTION_NAMES = frozenset(CORRECTION_TYPES.values())

_CREATED_EPOCH = datetime(2000, 1, 1, tzinfo=timezone.utc)


def normalize_correction_type(value: str) -> str:
    if value in CORRECTION_NAMES:
        return value
    if value in CORRECTION_TYPES:
        return CORRECTION_TYPES[value]
    raise RevisionValidationError(f"unknown correction type: {value!r}")


@dataclass(frozen=True)
class Revision:
    correction_type: str
    note: str
    edited_think_block: str

    def __post_init__(self):
        object.__setattr__(self, "correction_type", normalize_correction_type(self.correction_type))
        if not self.edited_think_block.strip():
            raise RevisionValidationError("revision must carry a non-empty edited think block")


@dataclass(frozen=True)
class ReasoningTrace:
    trace_id: str
    sample_id: str
    task: TaskKind
    cue_block: str
    think_block: str
    answer: ParticipantId
    attempts_used: int
    status: str = STATUS_PENDING
    revisions: tuple = ()
    created_seq: int = 0
    created_at: str = ""

    def __post_init__(self):
        if not (1 <= self.attempts_used <= MAX_ATTEMPTS):
            raise ValueError(f"attempts_used must be in 1..{MAX_ATTEMPTS}")
        if self.status == STATUS_REVISED and not self.revisions:
            raise ValueError("revised trace must carry at least one revision")

    @property
    def active_think_block(self) -> str:
        return self.revisions[-1].edited_think_block if self.revisions else self.think_block


@dataclass(frozen=True)
class TraceFailure:
    sample_id: str
    attempts: int
    wrong_answers: tuple  # every wrong answer (or error string) in attempt order


@dataclass(frozen=True)
class Decision:
    action: str  # accept | discard | revise
    revisions: tuple = ()


def apply_review_decision(trace: ReasoningTrace, decision: Decision) -> ReasoningTrace:
    """pending -> accepted | discarded | revised; anything else is invalid."""
    if trace.status != STATUS_PENDING:
        raise InvalidTransitionError(f"trace {trace.trace_id} is {trace.status}, not pending")
    if decision.action == "accept":
        return replace(trace, status=STATUS_ACCEPTED)
    if decision.action == "discard":
        return replace(trace, status=STATUS_DISCARDED)
    if decision.action == "revise":
        if not decision.revisions:
            raise RevisionValidationError("revise needs at least one revision")
        revs = tuple(r if isinstance(r, Revision) else Revision(**r) for r in decision.revisions)
        return replace(trace, status=STATUS_REVISED, revisions=trace.revisions + revs)
    raise RevisionValidationError(f"unknown decision action: {decision.action!r}")


# ---------------------------------------------------------------------------
# Generation (rejection sampling).


@dataclass(frozen=True)
class CurationSample:
    segment: QuerySegment
    references: tuple
    cues: SocialCueSet


def _created_at(seq: int) -> str:
    return (_CREATED_EPOCH + timedelta(seconds=seq)).strftime("%Y-%m-%dT%H:%M:%SZ")


def generate_trace(
    sample: CurationSample,
    client,
    max_attempts: int = MAX_ATTEMPTS,
    mode: PromptMode = PromptMode.WITH_REFERENCE_AND_CUES,
    created_seq: int = 0,
    params: Optional[dict] = None,
):
    """Query the generator until the answer matches gold, or give up.

    Client and parse failures count as failed attempts (logged into the
    failure record, never raised). Returns a pending ReasoningTrace or a
    TraceFailure after exactly max_attempts misses.
    """
    seg = sample.segment
    if seg.gold_referent is None:
        raise ValueError(f"sample {seg.sample_id} has no gold referent to filter against")
    wrong = []
    for attempt in range(1, max_attempts + 1):
        try:
            output, _bundle = infer(
                seg, client, mode, references=sample.references, cues=sample.cues, params=params
            )
        except (ClientError, MissingAnswerError, MalformedAnswerError) as exc:
            wrong.append(f"<error: {exc}>")
            continue
        if output.answer == seg.gold_referent:
            return ReasoningTrace(
                trace_id=f"t-{seg.sample_id}",
                sample_id=seg.sample_id,
                task=seg.task,
                cue_block=(output.cue_block or "").strip(),
                think_block=(output.think_block or "").strip(),
                answer=output.answer,
                attempts_used=attempt,
                status=STATUS_PENDING,
                created_seq=created_seq,
                created_at=_created_at(created_seq),
            )
        wrong.append(output.answer.render())
    return TraceFailure(sample_id=seg.sample_id, attempts=max_attempts, wrong_answers=tuple(wrong))


@dataclass
class CurationResult:
    traces: list
    failures: list

    @property
    def summary(self) -> dict:
        return {
            "total": len(self.traces) + len(self.failures),
            "pending": len(self.traces),
            "failed": len(self.failures),
        }


def curate_dataset(
    samples: Sequence[CurationSample],
    client,
    max_attempts: int = MAX_ATTEMPTS,
    store: Optional["TraceStore"] = None,
) -> CurationResult:
    """One trace or one failure record per sample, outcomes independent."""
    traces, failures = [], []
    for seq, sample in enumerate(samples):
        result = generate_trace(sample, client, max_attempts=max_attempts, created_seq=seq)
        if isinstance(result, ReasoningTrace):
            traces.append(result)
            if store is not None:
                store.append_created(result)
        else:
            failures.append(result)
    return CurationResult(traces=traces, failures=failures)


# ---------------------------------------------------------------------------
# Event-sourced trace store.


def trace_to_json(trace: ReasoningTrace) -> dict:
    return {
        "trace_id": trace.trace_id,
        "sample_id": trace.sample_id,
        "task": trace.task.value,
        "cue_block": trace.cue_block,
        "think_block": trace.think_block,
        "answer": trace.answer.render(),
        "attempts_used": trace.attempts_used,
        "status": trace.status,
        "revisions": [
            {"correction_type": r.correction_type, "note": r.note, "edited_think_block": r.edited_think_block}
            for r in trace.revisions
        ],
        "created_seq": trace.created_seq,
        "created_at": trace.created_at,
    }


def trace_from_json(obj: dict) -> ReasoningTrace:
    return ReasoningTrace(
        trace_id=obj["trace_id"],
        sample_id=obj["sample_id"],
        task=TaskKind(obj["task"]),
        cue_block=obj.get("cue_block", ""),
        think_block=obj.get("think_block", ""),
        answer=ParticipantId.parse(obj["answer"]),
        attempts_used=obj["attempts_used"],
        status=obj.get("status", STATUS_PENDING),
        revisions=tuple(Revision(**r) for r in obj.get("revisions", [])),
        created_seq=obj.get("created_seq", 0),
        created_at=obj.get("created_at", ""),
    )


class TraceStore:
    """Append-only JSONL event log; current state is replayed from it.

    Events: {"event": "trace_created", "trace": {...}} and
    {"event": "decision_applied", "trace_id", "action", "revisions",
     "idempotency_key"}. Writes are serialized; decisions on one trace are
    linearized by the caller holding per-trace locks (see the service).
    """

    def __init__(self, path: Path, fresh: bool = False):
        self.path = Path(path)
        self._lock = threading.Lock()
        if fresh and self.path.exists():
            self.path.unlink()
        self.path.parent.mkdir(parents=True, exist_ok=True)
        if not self.path.exists():
            self.path.touch()

    def _append(self, event: dict) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8", newline="\n") as f:
                f.write(json.dumps(event, sort_keys=True) + "\n")

    def append_created(self, trace: ReasoningTrace) -> None:
        self._append({"event": "trace_created", "trace": trace_to_json(trace)})

    def append_decision(
        self, trace_id: str, action: str, revisions: Sequence[Revision] = (), idempotency_key: Optional[str] = None
    ) -> None:
        self._append(
            {
                "event": "decision_applied",
                "trace_id": trace_id,
                "action": action,
                "revisions": [
                    {"correction_type": r.correction_type, "note": r.note, "edited_think_block": r.edited_think_block}
                    for r in revisions
                ],
                "idempotency_key": idempotency_key,
            }
        )

    def replay(self):
        """Rebuild (traces by id in creation order, idempotency-key map)."""
        traces: dict = {}
        idem: dict = {}
        with self.path.open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                event = json.loads(line)
                if event["event"] == "trace_created":
                    t = trace_from_json(event["trace"])
                    traces[t.trace_id] = t
                elif event["event"] == "decision_applied":
                    t = traces[event["trace_id"]]
                    decision = Decision(
                        action=event["action"],
                        revisions=tuple(Revision(**r) for r in event.get("revisions", [])),
                    )
                    updated = apply_review_decision(t, decision)
                    traces[t.trace_id] = updated
                    key = event.get("idempotency_key")
                    if key:
                        idem[key] = (t.trace_id, updated.status)
        return traces, idem


# ---------------------------------------------------------------------------
# Training dataset export.


def shape_think_block(think_block: str, cue_block: str, steps: int = 2) -> str:
    """Reasoning-granularity ablation: 2 is the canonical shape as generated;
    1 drops the leading speaker-confirmation step; 3 prepends explicit cue
    extraction. Numbered lines are renumbered to stay contiguous."""
    if steps == 2:
        return think_block
    lines = think_block.splitlines()
    if steps == 1:
        kept = [ln for ln in lines if not ln.lstrip().startswith("1.")]
        return "\n".join(_renumber(kept))
    if steps == 3:
        cue_lines = ["1. Social cue extraction:"] + [f"   {ln}" for ln in cue_block.splitlines() if ln.strip()]
        shifted = []
        for ln in lines:
            stripped = ln.lstrip()
            if stripped[:2] in {"1.", "2.", "3."} and stripped[1] == ".":
                n = int(stripped[0]) + 1
                shifted.append(ln.replace(f"{stripped[0]}.", f"{n}.", 1))
            else:
                shifted.append(ln)
        return "\n".join(cue_lines + shifted)
    raise ValueError(f"reasoning steps must be 1, 2, or 3, got {steps}")


def _renumber(lines: Sequence[str]) -> list:
    out = []
    counter = 0
    for ln in lines:
        stripped = ln.lstrip()
        if len(stripped) > 1 and stripped[0].isdigit() and stripped[1] == ".":
            counter += 1
            out.append(ln.replace(f"{stripped[0]}.", f"{counter}.", 1))
        else:
            out.append(ln)
    return out


def export_training_dataset(
    traces: Sequence[ReasoningTrace],
    context_lookup: Callable[[str], CurationSample],
    path: Path,
    reasoning_steps: int = 2,
):
    """Write accepted/revised traces as conversation-style JSONL.

    Returns (written, skipped): pending/discarded traces are filtered out and
    counted, never exported. Records are ordered by sample_id and the
    assistant target is the tagged think block followed by the tagged answer.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    exportable = sorted(
        (t for t in traces if t.status in (STATUS_ACCEPTED, STATUS_REVISED)), key=lambda t: t.sample_id
    )
    skipped = len(traces) - len(exportable)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for trace in exportable:
            sample = context_lookup(trace.sample_id)
            seg = sample.segment
            attachments = []
            for pair in sample.references:
                attachments.append(
                    Attachment(kind="reference_audio", participant=pair.participant.render(), ref=pair.voice_ref)
                )
                attachments.append(
                    Attachment(kind="reference_image", participant=pair.participant.render(), ref=pair.portrait_ref)
                )
            attachments.append(Attachment(kind="cue_text", text=trace.cue_block))
            attachments.append(Attachment(kind="query_audio", ref=seg.audio_ref))
            attachments.append(Attachment(kind="query_video", ref=seg.video_ref))
            think = shape_think_block(trace.active_think_block, trace.cue_block, reasoning_steps)
            target = f"<think>{think}</think>\n<answer>{trace.answer.render()}</answer>"
            record = {
                "sample_id": trace.sample_id,
                "messages": [
                    {"role": "system", "content": prompt_text(seg.task, PromptMode.TRAINING)},
                    {"role": "user", "content": [a.describe() for a in attachments]},
                    {"role": "assistant", "content": target},
                ],
            }
            f.write(json.dumps(record, sort_keys=True) + "\n")
    return len(exportable), skipped


# ---------------------------------------------------------------------------
# Training configuration emission.


@dataclass(frozen=True)
class TrainingConfig:
    adapter_rank: int = 8
    learning_rate: float = 1e-4
    epochs: int = 3
    scheduler: str = "cosine"
    warmup_fraction: float = 0.10
    context_length: int = 16384
    per_device_batch: int = 1
    grad_accum: int = 1


_CONFIG_FIELDS = tuple(TrainingConfig.__dataclass_fields__)


def emit_training_config(overrides: Optional[dict] = None) -> TrainingConfig:
    overrides = dict(overrides or {})
    for key in overrides:
        if key not in _CONFIG_FIELDS:
            raise UnknownConfigKeyError(key)
    return TrainingConfig(**overrides)


def write_training_config(config: TrainingConfig, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{name} = {getattr(config, name)}" for name in _CONFIG_FIELDS]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_training_config(path: Path) -> TrainingConfig:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (piece.strip() for piece in line.partition("="))
        if not sep:
            raise OmniAttribError(f"{path}:{lineno}: expected 'key = value'")
        if key not in _CONFIG_FIELDS:
            raise UnknownConfigKeyError(key)
        kind = TrainingConfig.__dataclass_fields__[key].type
        if kind == "int":
            values[key] = int(value)
        elif kind == "float":
            values[key] = float(value)
        else:
            values[key] = value
    return TrainingConfig(**values)
