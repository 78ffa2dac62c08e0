"""HTTP review service over the curation trace store.

Serves the pending queue, trace detail with media links for evidence checks,
and decision submission. Decisions are linearized per trace id, persisted as
events, and idempotency keys replay the original response without writing a
second event. Media links never leave the configured data root.
"""

from __future__ import annotations

import os
import threading
from pathlib import Path
from typing import List, Optional

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from .curator import (
    STATUS_PENDING,
    Decision,
    Revision,
    TraceStore,
    apply_review_decision,
    trace_to_json,
)
from .errors import InvalidTransitionError, RevisionValidationError
from .manifest import read_manifest

VALID_STATUSES = {"pending", "accepted", "discarded", "revised"}


class RevisionBody(BaseModel):
    correction_type: str
    note: str = ""
    edited_think_block: str = ""


class DecisionBody(BaseModel):
    action: str
    revisions: List[RevisionBody] = []
    idempotency_key: Optional[str] = None


class ReviewState:
    """In-memory view replayed from the event log, plus per-trace locks."""

    def __init__(self, store: TraceStore):
        self.store = store
        self.traces, self.idempotency = store.replay()
        self._locks = {}
        self._locks_guard = threading.Lock()

    def lock_for(self, trace_id: str) -> threading.Lock:
        with self._locks_guard:
            if trace_id not in self._locks:
                self._locks[trace_id] = threading.Lock()
            return self._locks[trace_id]


def _queue_entry(trace) -> dict:
    return {
        "trace_id": trace.trace_id,
        "sample_id": trace.sample_id,
        "task": trace.task.value,
        "attempts_used": trace.attempts_used,
        "created_at": trace.created_at,
        "status": trace.status,
    }


def create_app(
    store_path: Path,
    data_root: Optional[Path] = None,
    manifest_path: Optional[Path] = None,
    bank_dir: Optional[Path] = None,
    attribution_dir: Optional[Path] = None,
) -> FastAPI:
    store = TraceStore(store_path)
    state = ReviewState(store)
    data_root = Path(data_root).resolve() if data_root else None

    segments = {}
    if manifest_path and Path(manifest_path).exists():
        for entry in read_manifest(manifest_path):
            segments[entry.segment.sample_id] = entry.segment
    bank_entries = {}
    if bank_dir and (Path(bank_dir) / "bank.json").exists():
        from .bank import load_bank

        for pair in load_bank(bank_dir, check_media=False).entries:
            bank_entries[pair.participant.render()] = pair

    app = FastAPI(title="omni-attrib review service")
    app.state.review = state

    def media_link(path_str: str) -> Optional[str]:
        if not path_str or data_root is None:
            return None
        resolved = Path(path_str)
        if not resolved.is_absolute():
            resolved = data_root / resolved
        try:
            rel = resolved.resolve().relative_to(data_root)
        except ValueError:
            return None
        return f"/media/{rel.as_posix()}"

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/queue")
    def queue(status: Optional[str] = None, limit: int = 50, offset: int = 0):
        if status is not None and status not in VALID_STATUSES:
            return JSONResponse({"error": f"unknown status filter: {status}"}, status_code=400)
        if limit < 0 or offset < 0:
            return JSONResponse({"error": "limit and offset must be non-negative"}, status_code=400)
        wanted = status or STATUS_PENDING
        entries = [t for t in state.traces.values() if t.status == wanted]
        entries.sort(key=lambda t: (t.created_seq, t.trace_id))
        page = entries[offset : offset + limit]
        return {
            "total": len(entries),
            "offset": offset,
            "limit": limit,
            "entries": [_queue_entry(t) for t in page],
        }

    def attribution_rows(sample_id: str) -> list:
        if attribution_dir is None:
            return []
        path = Path(attribution_dir) / f"attribution_{sample_id}.jsonl"
        if not path.exists():
            return []
        import json as _json

        rows = []
        for line in path.read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if line:
                rows.append(_json.loads(line))
        return rows

    @app.get("/trace/{trace_id}")
    def trace_detail(trace_id: str):
        trace = state.traces.get(trace_id)
        if trace is None:
            return JSONResponse({"error": f"unknown trace: {trace_id}"}, status_code=404)
        doc = trace_to_json(trace)
        doc["active_think_block"] = trace.active_think_block
        doc["attribution"] = attribution_rows(trace.sample_id)
        seg = segments.get(trace.sample_id)
        media = {}
        if seg is not None:
            media["query_audio"] = media_link(seg.audio_ref)
            media["query_video"] = media_link(seg.video_ref)
            refs = []
            for pid in seg.roster:
                pair = bank_entries.get(pid.render())
                if pair is None:
                    continue
                base = Path(bank_dir) if bank_dir else None
                refs.append(
                    {
                        "participant": pid.render(),
                        "voice": media_link(str(base / pair.voice_ref)) if base and pair.voice_ref else None,
                        "portrait": media_link(str(base / pair.portrait_ref)) if base and pair.portrait_ref else None,
                    }
                )
            media["references"] = refs
        doc["media"] = media
        return doc

    @app.post("/trace/{trace_id}/decision")
    def decide(trace_id: str, body: DecisionBody):
        trace = state.traces.get(trace_id)
        if trace is None:
            return JSONResponse({"error": f"unknown trace: {trace_id}"}, status_code=404)
        if body.action not in ("accept", "discard", "revise"):
            return JSONResponse({"error": f"unknown action: {body.action}"}, status_code=422)
        try:
            revisions = tuple(
                Revision(
                    correction_type=r.correction_type,
                    note=r.note,
                    edited_think_block=r.edited_think_block,
                )
                for r in body.revisions
            )
            if body.action == "revise" and not revisions:
                raise RevisionValidationError("revise needs at least one revision")
        except RevisionValidationError as exc:
            return JSONResponse({"error": str(exc)}, status_code=422)

        with state.lock_for(trace_id):
            if body.idempotency_key and body.idempotency_key in state.idempotency:
                known_id, _status = state.idempotency[body.idempotency_key]
                known = state.traces[known_id]
                doc = trace_to_json(known)
                doc["active_think_block"] = known.active_think_block
                doc["replayed"] = True
                return doc
            current = state.traces[trace_id]
            try:
                updated = apply_review_decision(current, Decision(action=body.action, revisions=revisions))
            except InvalidTransitionError as exc:
                return JSONResponse({"error": str(exc)}, status_code=409)
            except RevisionValidationError as exc:
                return JSONResponse({"error": str(exc)}, status_code=422)
            store.append_decision(trace_id, body.action, revisions, body.idempotency_key)
            state.traces[trace_id] = updated
            if body.idempotency_key:
                state.idempotency[body.idempotency_key] = (trace_id, updated.status)
        doc = trace_to_json(updated)
        doc["active_think_block"] = updated.active_think_block
        return doc

    @app.get("/media/{rel_path:path}")
    def media(rel_path: str, request: Request):
        if data_root is None:
            return JSONResponse({"error": "no data root configured"}, status_code=404)
        target = (data_root / rel_path).resolve()
        if not str(target).startswith(str(data_root) + os.sep) and target != data_root:
            return JSONResponse({"error": "path outside data root"}, status_code=403)
        if not target.is_file():
            return JSONResponse({"error": "not found"}, status_code=404)
        data = target.read_bytes()
        range_header = request.headers.get("range")
        media_type = "application/octet-stream"
        if target.suffix == ".wav":
            media_type = "audio/wav"
        elif target.suffix in (".png", ".jpg", ".jpeg"):
            media_type = "image/png" if target.suffix == ".png" else "image/jpeg"
        if range_header and range_header.startswith("bytes="):
            spec = range_header[len("bytes=") :]
            start_s, _, end_s = spec.partition("-")
            try:
                start = int(start_s) if start_s else 0
                end = int(end_s) if end_s else len(data) - 1
            except ValueError:
                return JSONResponse({"error": "bad range"}, status_code=416)
            end = min(end, len(data) - 1)
            if start > end or start >= len(data):
                return JSONResponse({"error": "range out of bounds"}, status_code=416)
            chunk = data[start : end + 1]
            return Response(
                content=chunk,
                status_code=206,
                media_type=media_type,
                headers={
                    "Content-Range": f"bytes {start}-{end}/{len(data)}",
                    "Accept-Ranges": "bytes",
                },
            )
        return Response(content=data, media_type=media_type, headers={"Accept-Ranges": "bytes"})

    return app
