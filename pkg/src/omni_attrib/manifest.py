"""Dataset manifest I/O: one line-delimited JSON record per query segment.

Schema version "omni-attrib/1". Each record carries the segment plus its gold
cues so evaluation never needs a second lookup:

    {"version": "omni-attrib/1", "sample_id": ..., "audio": ..., "video": ...,
     "duration_s": ..., "turn_count": ..., "task": "STI"|"PCR",
     "roster_size": N, "gold_referent": "PlayerK" | null,
     "gold_verbal": [{"start_s", "end_s", "text", "speaker", "confidence"}, ...],
     "gold_nonverbal": [{"box": [x0, y0, x1, y1], "identity", "confidence"}, ...]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional

from .core import (
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
from .errors import MalformedRecordError

MANIFEST_VERSION = "omni-attrib/1"


@dataclass(frozen=True)
class ManifestEntry:
    segment: QuerySegment
    gold_cues: SocialCueSet


def cue_set_to_json(cues: SocialCueSet) -> dict:
    return {
        "verbal": [
            {
                "start_s": v.utterance.start_s,
                "end_s": v.utterance.end_s,
                "text": v.utterance.text,
                "speaker": v.speaker.render(),
                "confidence": v.confidence,
            }
            for v in cues.verbal
        ],
        "nonverbal": [
            {
                "box": d.box.as_list(),
                "identity": d.identity.render(),
                "confidence": d.confidence,
            }
            for d in cues.nonverbal
        ],
    }


def cue_set_from_json(obj: dict) -> SocialCueSet:
    try:
        verbal = [
            AttributedUtterance(
                Utterance(v["start_s"], v["end_s"], v["text"]),
                ParticipantId.parse(v["speaker"]),
                v.get("confidence", 1.0),
            )
            for v in obj.get("verbal", [])
        ]
        nonverbal = [
            AttributedDetection(
                BoundingBox(*d["box"]),
                ParticipantId.parse(d["identity"]),
                d.get("confidence", 1.0),
            )
            for d in obj.get("nonverbal", [])
        ]
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(f"bad cue record: {exc}") from exc
    return SocialCueSet(verbal, nonverbal)


def entry_to_json(entry: ManifestEntry) -> dict:
    seg = entry.segment
    cues = cue_set_to_json(entry.gold_cues)
    return {
        "version": MANIFEST_VERSION,
        "sample_id": seg.sample_id,
        "audio": seg.audio_ref,
        "video": seg.video_ref,
        "duration_s": seg.duration_s,
        "turn_count": seg.turn_count,
        "task": seg.task.value,
        "roster_size": len(seg.roster),
        "gold_referent": seg.gold_referent.render() if seg.gold_referent else None,
        "gold_verbal": cues["verbal"],
        "gold_nonverbal": cues["nonverbal"],
    }


def entry_from_json(obj: dict) -> ManifestEntry:
    if obj.get("version") != MANIFEST_VERSION:
        raise MalformedRecordError(
            f"unsupported manifest version: {obj.get('version')!r} (want {MANIFEST_VERSION!r})"
        )
    try:
        roster = make_roster(int(obj["roster_size"]))
        gold = obj.get("gold_referent")
        segment = QuerySegment(
            sample_id=obj["sample_id"],
            audio_ref=obj["audio"],
            video_ref=obj["video"],
            duration_s=obj["duration_s"],
            turn_count=obj["turn_count"],
            task=TaskKind(obj["task"]),
            roster=roster,
            gold_referent=ParticipantId.parse(gold) if gold else None,
        )
    except MalformedRecordError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise MalformedRecordError(f"bad manifest record: {exc}") from exc
    cues = cue_set_from_json({"verbal": obj.get("gold_verbal", []), "nonverbal": obj.get("gold_nonverbal", [])})
    return ManifestEntry(segment=segment, gold_cues=cues)


def write_manifest(entries: Iterable[ManifestEntry], path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            f.write(json.dumps(entry_to_json(entry), sort_keys=True) + "\n")


def read_manifest(path: Path, resolve_media: bool = True) -> list:
    """Read entries; relative media paths resolve against the manifest's
    directory so a scene directory can be moved or compared byte-for-byte."""
    path = Path(path)
    base = path.parent
    entries = []
    with path.open("r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise MalformedRecordError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
            entry = entry_from_json(obj)
            if resolve_media:
                seg = entry.segment
                audio, video = seg.audio_ref, seg.video_ref
                if audio and not audio.startswith("synthetic://") and not Path(audio).is_absolute():
                    audio = str(base / audio)
                if video and not video.startswith("synthetic://") and not Path(video).is_absolute():
                    video = str(base / video)
                if (audio, video) != (seg.audio_ref, seg.video_ref):
                    entry = ManifestEntry(
                        segment=QuerySegment(
                            sample_id=seg.sample_id,
                            audio_ref=audio,
                            video_ref=video,
                            duration_s=seg.duration_s,
                            turn_count=seg.turn_count,
                            task=seg.task,
                            roster=seg.roster,
                            gold_referent=seg.gold_referent,
                        ),
                        gold_cues=entry.gold_cues,
                    )
            entries.append(entry)
    return entries
