"""Shared domain types, identifier conventions, and participant ordering.

Everything here is immutable after construction and every operation is pure,
so the types are safe to share across threads and processes.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

from .errors import EmptyRosterError

_PLAYER_RE = re.compile(r"^Player(0|[1-9][0-9]*)$")

# Tokens: letters plus internal apostrophes, so "he's" stays one token and its
# leading part can still match a bare pronoun.
_WORD_RE = re.compile(r"[a-z]+(?:'[a-z]+)*")


class TaskKind(str, Enum):
    STI = "STI"
    PCR = "PCR"


@dataclass(frozen=True, order=True)
class ParticipantId:
    """Scene-local identity. Rendered as ``Player<index>``, left-to-right order."""

    index: int

    def __post_init__(self):
        if not isinstance(self.index, int) or isinstance(self.index, bool):
            raise TypeError(f"participant index must be an int, got {self.index!r}")
        if self.index < 0:
            raise ValueError(f"participant index must be >= 0, got {self.index}")

    def render(self) -> str:
        return f"Player{self.index}"

    @classmethod
    def parse(cls, text: str) -> "ParticipantId":
        m = _PLAYER_RE.match(text)
        if m is None:
            raise ValueError(f"not a participant id: {text!r}")
        return cls(int(m.group(1)))

    def __str__(self) -> str:
        return self.render()


@dataclass(frozen=True)
class BoundingBox:
    """Axis-aligned box in normalized image coordinates."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if not (0.0 <= self.x_min < self.x_max <= 1.0):
            raise ValueError(f"invalid x range: [{self.x_min}, {self.x_max}]")
        if not (0.0 <= self.y_min < self.y_max <= 1.0):
            raise ValueError(f"invalid y range: [{self.y_min}, {self.y_max}]")

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def as_list(self) -> list:
        return [self.x_min, self.y_min, self.x_max, self.y_max]


@dataclass(frozen=True)
class Utterance:
    """One transcribed speech segment with timestamps in seconds."""

    start_s: float
    end_s: float
    text: str

    def __post_init__(self):
        if not (0.0 <= self.start_s < self.end_s):
            raise ValueError(f"invalid utterance interval: [{self.start_s}, {self.end_s}]")
        if not self.text:
            raise ValueError("utterance text must be non-empty")


@dataclass(frozen=True)
class AttributedUtterance:
    utterance: Utterance
    speaker: ParticipantId
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class AttributedDetection:
    box: BoundingBox
    identity: ParticipantId
    confidence: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.confidence <= 1.0):
            raise ValueError(f"confidence outside [0, 1]: {self.confidence}")


@dataclass(frozen=True)
class SocialCueSet:
    """Identity-attributed cues: chronological utterances plus last-frame boxes."""

    verbal: tuple
    nonverbal: tuple

    def __init__(self, verbal: Sequence[AttributedUtterance], nonverbal: Sequence[AttributedDetection]):
        verbal = tuple(verbal)
        nonverbal = tuple(nonverbal)
        starts = [v.utterance.start_s for v in verbal]
        if any(a > b for a, b in zip(starts, starts[1:])):
            raise ValueError("verbal cues must be sorted by start_s (non-decreasing)")
        object.__setattr__(self, "verbal", verbal)
        object.__setattr__(self, "nonverbal", nonverbal)


@dataclass(frozen=True)
class QuerySegment:
    """One audio-video sample: media locators, task kind, roster, optional gold."""

    sample_id: str
    audio_ref: str
    video_ref: str
    duration_s: float
    turn_count: int
    task: TaskKind
    roster: tuple
    gold_referent: Optional[ParticipantId] = None

    def __init__(
        self,
        sample_id: str,
        audio_ref: str,
        video_ref: str,
        duration_s: float,
        turn_count: int,
        task: TaskKind,
        roster: Sequence[ParticipantId],
        gold_referent: Optional[ParticipantId] = None,
    ):
        if turn_count < 1:
            raise ValueError(f"turn_count must be >= 1, got {turn_count}")
        if duration_s <= 0:
            raise ValueError(f"duration_s must be > 0, got {duration_s}")
        roster = tuple(roster)
        if gold_referent is not None and gold_referent not in roster:
            raise ValueError(f"gold referent {gold_referent} not in roster")
        object.__setattr__(self, "sample_id", sample_id)
        object.__setattr__(self, "audio_ref", audio_ref)
        object.__setattr__(self, "video_ref", video_ref)
        object.__setattr__(self, "duration_s", float(duration_s))
        object.__setattr__(self, "turn_count", int(turn_count))
        object.__setattr__(self, "task", TaskKind(task))
        object.__setattr__(self, "roster", roster)
        object.__setattr__(self, "gold_referent", gold_referent)


STI_TRIGGERS = frozenset({"you", "your"})
PCR_TRIGGERS = frozenset({"he", "she", "him", "her", "his"})


@dataclass(frozen=True)
class TaskSpec:
    """Task kind plus the pronoun tokens that trigger it."""

    kind: TaskKind
    trigger_tokens: frozenset = field(default_factory=frozenset)

    def __init__(self, kind: TaskKind, trigger_tokens: Optional[Sequence[str]] = None):
        kind = TaskKind(kind)
        if trigger_tokens is None:
            trigger_tokens = STI_TRIGGERS if kind is TaskKind.STI else PCR_TRIGGERS
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "trigger_tokens", frozenset(t.lower() for t in trigger_tokens))

    @classmethod
    def for_kind(cls, kind: TaskKind) -> "TaskSpec":
        return cls(kind)


def make_roster(n: int) -> tuple:
    """Dense roster Player0..Player(n-1)."""
    return tuple(ParticipantId(i) for i in range(n))


def order_participants(boxes: Sequence[BoundingBox]) -> list:
    """Assign identities to boxes by left-to-right position.

    Returns (ParticipantId, BoundingBox) pairs sorted ascending by x_min;
    rank i gets Player i. Ties on x_min fall back to ascending y_min, then
    original input order (stable).
    """
    if not boxes:
        raise EmptyRosterError("cannot order an empty set of participant boxes")
    ranked = sorted(range(len(boxes)), key=lambda i: (boxes[i].x_min, boxes[i].y_min, i))
    return [(ParticipantId(rank), boxes[i]) for rank, i in enumerate(ranked)]


def contains_trigger(text: str, task: TaskSpec) -> bool:
    """Whole-word, case-insensitive trigger check.

    Contractions count through their leading token ("he's" triggers "he").
    """
    triggers = task.trigger_tokens
    for token in _WORD_RE.findall(text.lower()):
        if token in triggers or token.split("'", 1)[0] in triggers:
            return True
    return False
