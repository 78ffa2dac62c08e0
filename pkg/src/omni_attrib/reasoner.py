"""Prompt assembly, model-output parsing, and the reasoning-client contract.

System prompts are static golden files under ``prompts/`` (UTF-8, LF), one
per (task, mode); assembly never substitutes into them, it only orders the
attachment payloads (references, cues, query). Model output is the tagged
``<cue>/<think>/<answer>`` structure; the last answer tag wins and the answer
must parse as PlayerN.
"""

from __future__ import annotations

import hashlib
import json
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .core import ParticipantId, QuerySegment, SocialCueSet, TaskKind
from .errors import ClientError, MalformedAnswerError, MissingAnswerError, MissingInputError


class PromptMode(str, Enum):
    NO_REFERENCE = "no_reference"
    WITH_REFERENCE = "with_reference"
    WITH_REFERENCE_AND_CUES = "with_reference_and_cues"
    TRAINING = "training"


_MODES_NEEDING_REFERENCES = {
    PromptMode.WITH_REFERENCE,
    PromptMode.WITH_REFERENCE_AND_CUES,
    PromptMode.TRAINING,
}
_MODES_NEEDING_CUES = {PromptMode.WITH_REFERENCE_AND_CUES, PromptMode.TRAINING}

STRUCTURAL_MARKERS = (
    "# Required reasoning structure",
    "<think> ... </think>",
    "<answer> PlayerN </answer>",
)

_prompt_cache: dict = {}


def prompt_text(task: TaskKind, mode: PromptMode) -> str:
    """The golden system prompt for (task, mode), loaded byte-exact."""
    key = (TaskKind(task), PromptMode(mode))
    if key not in _prompt_cache:
        name = f"{key[0].value.lower()}_{key[1].value}.txt"
        data = resources.files("omni_attrib.prompts").joinpath(name).read_bytes()
        _prompt_cache[key] = data.decode("utf-8")
    return _prompt_cache[key]


@dataclass(frozen=True)
class Attachment:
    kind: str  # reference_audio | reference_image | cue_text | query_audio | query_video
    participant: Optional[str] = None
    ref: Optional[str] = None
    text: Optional[str] = None

    def describe(self) -> dict:
        out = {"kind": self.kind}
        if self.participant is not None:
            out["participant"] = self.participant
        if self.ref is not None:
            out["ref"] = self.ref
        if self.text is not None:
            out["text"] = self.text
        return out


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    attachments: tuple
    mode: PromptMode
    task: TaskKind

    def sha256(self) -> str:
        h = hashlib.sha256(self.system_text.encode("utf-8"))
        for att in self.attachments:
            h.update(json.dumps(att.describe(), sort_keys=True).encode("utf-8"))
        return h.hexdigest()


@dataclass(frozen=True)
class ModelOutput:
    raw: str
    answer: ParticipantId
    cue_block: Optional[str] = None
    think_block: Optional[str] = None


def render_cue_text(cues: SocialCueSet) -> str:
    """Render attributed cues in the prompt example's line format."""
    lines = ["The verbal cues of all players are:"]
    for v in cues.verbal:
        lines.append(f"[{v.speaker.render()}]: {v.utterance.text}")
    lines.append("The non-verbal cues of all players are:")
    for d in cues.nonverbal:
        coords = ", ".join(f"{c:.3f}" for c in d.box.as_list())
        lines.append(f"{d.identity.render()} ([{coords}]) is visible at this position in the last frame.")
    return "\n".join(lines)


def assemble_prompt(
    task: TaskKind,
    mode: PromptMode,
    segment: QuerySegment,
    references: Optional[Sequence] = None,
    cues: Optional[SocialCueSet] = None,
) -> PromptBundle:
    """Build the bundle for one inference call.

    Attachment order is fixed: references, then cue text, then query media.
    Missing mode-required inputs raise MissingInputError.
    """
    mode = PromptMode(mode)
    task = TaskKind(task)
    if mode in _MODES_NEEDING_REFERENCES and not references:
        raise MissingInputError(f"mode {mode.value} requires references")
    if mode in _MODES_NEEDING_CUES and cues is None:
        raise MissingInputError(f"mode {mode.value} requires attributed cues")

    attachments = []
    if mode in _MODES_NEEDING_REFERENCES:
        for pair in references:
            attachments.append(
                Attachment(kind="reference_audio", participant=pair.participant.render(), ref=pair.voice_ref)
            )
            attachments.append(
                Attachment(kind="reference_image", participant=pair.participant.render(), ref=pair.portrait_ref)
            )
    if mode in _MODES_NEEDING_CUES:
        attachments.append(Attachment(kind="cue_text", text=render_cue_text(cues)))
    attachments.append(Attachment(kind="query_audio", ref=segment.audio_ref))
    attachments.append(Attachment(kind="query_video", ref=segment.video_ref))

    return PromptBundle(
        system_text=prompt_text(task, mode),
        attachments=tuple(attachments),
        mode=mode,
        task=task,
    )


def _innermost_spans(raw: str, tag: str) -> list:
    # A span whose content contains no further opening tag is innermost.
    pattern = re.compile(rf"<{tag}>((?:(?!<{tag}>).)*?)</{tag}>", re.DOTALL)
    return [m.group(1) for m in pattern.finditer(raw)]


def parse_model_output(raw: str) -> ModelOutput:
    """Extract cue/think/answer spans; the last answer tag wins."""
    answers = _innermost_spans(raw, "answer")
    if not answers:
        raise MissingAnswerError(raw)
    answer_text = answers[-1].strip()
    try:
        answer = ParticipantId.parse(answer_text)
    except ValueError:
        raise MalformedAnswerError(answer_text, raw) from None
    cues = _innermost_spans(raw, "cue")
    thinks = _innermost_spans(raw, "think")
    return ModelOutput(
        raw=raw,
        answer=answer,
        cue_block=cues[0] if cues else None,
        think_block=thinks[0] if thinks else None,
    )


def render_model_output(cue_block: Optional[str], think_block: Optional[str], answer: ParticipantId) -> str:
    """Canonical tagged rendering; parse_model_output round-trips it."""
    parts = []
    if cue_block is not None:
        parts.append(f"<cue>{cue_block}</cue>")
    if think_block is not None:
        parts.append(f"<think>{think_block}</think>")
    parts.append(f"<answer>{answer.render()}</answer>")
    return "\n".join(parts)


# ---------------------------------------------------------------------------
# Client contract.


@dataclass(frozen=True)
class ClientRequest:
    system_text: str
    attachments: tuple
    sample_id: str
    params: dict = field(default_factory=dict)


class StubClient:
    """Returns scripted raw outputs; per-sample lists are consumed in order."""

    def __init__(self, script=None, default: Optional[str] = None):
        self._script = dict(script or {})
        self._default = default
        self.calls = 0

    def complete(self, request: ClientRequest) -> str:
        self.calls += 1
        entry = self._script.get(request.sample_id, self._default)
        if isinstance(entry, list):
            if not entry:
                raise ClientError(f"stub script exhausted for {request.sample_id}")
            return entry.pop(0)
        if entry is None:
            raise ClientError(f"no scripted output for {request.sample_id}")
        return entry


class ReplayClient:
    """Replays recorded raw outputs from a JSONL file keyed by sample_id."""

    def __init__(self, path: Path):
        self._outputs = {}
        with Path(path).open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    obj = json.loads(line)
                    self._outputs.setdefault(obj["sample_id"], []).append(obj["raw"])
        self._cursor = {k: 0 for k in self._outputs}

    def complete(self, request: ClientRequest) -> str:
        outputs = self._outputs.get(request.sample_id)
        if not outputs:
            raise ClientError(f"no recorded output for {request.sample_id}")
        i = self._cursor[request.sample_id]
        self._cursor[request.sample_id] = min(i + 1, len(outputs) - 1)
        return outputs[i]


class GoldEchoClient:
    """Demo stub: answers the gold referent with a templated trace."""

    def __init__(self, answers: dict):
        self._answers = {k: v for k, v in answers.items()}

    def complete(self, request: ClientRequest) -> str:
        answer = self._answers.get(request.sample_id)
        if answer is None:
            raise ClientError(f"no gold answer for {request.sample_id}")
        think = (
            "1. Last speaker: confirmed against the reference voices.\n"
            f"2. Speaker's referent inference: the cues point at {answer}.\n"
            f"3. Decision: {answer}."
        )
        return render_model_output(None, think, ParticipantId.parse(answer))


def infer(
    segment: QuerySegment,
    client,
    mode: PromptMode,
    references: Optional[Sequence] = None,
    cues: Optional[SocialCueSet] = None,
    params: Optional[dict] = None,
):
    """One inference call: assemble, invoke, parse. No retries at this layer.

    Returns (ModelOutput, PromptBundle). Transport failures surface as
    ClientError; parse failures as Missing/MalformedAnswerError.
    """
    bundle = assemble_prompt(segment.task, mode, segment, references=references, cues=cues)
    request = ClientRequest(
        system_text=bundle.system_text,
        attachments=bundle.attachments,
        sample_id=segment.sample_id,
        params=dict(params or {}),
    )
    raw = client.complete(request)
    return parse_model_output(raw), bundle


def append_audit_log(path: Path, sample_id: str, mode: PromptMode, bundle: PromptBundle, raw: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("a", encoding="utf-8", newline="\n") as f:
        f.write(
            json.dumps(
                {"sample_id": sample_id, "mode": PromptMode(mode).value, "prompt_sha256": bundle.sha256(), "raw": raw}
            )
            + "\n"
        )
