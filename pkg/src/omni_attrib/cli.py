"""Operator CLI: every pipeline stage as a re-runnable, idempotent command.

Exit codes: 0 success, 2 usage, 3 configuration, 4 data/manifest,
5 adapter/client, 6 metric undefined (N/A) across an eval run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .adapters import build_registry
from .adapters.synthetic import SyntheticSceneSpec, materialize_scene, synthesize_scene
from .attribution import POLICY_INDEPENDENT, POLICY_ONE_TO_ONE, dump_attribution
from .bank import load_bank, save_bank, enroll, ReferenceBank
from .core import ParticipantId, TaskKind
from .curator import (
    CurationSample,
    TraceStore,
    curate_dataset,
    emit_training_config,
    export_training_dataset,
    write_training_config,
)
from .errors import (
    ClientError,
    ConfigError,
    MalformedRecordError,
    MissingMediaError,
    OmniAttribError,
    UnknownConfigKeyError,
)
from .evaluation import (
    aggregate_report,
    evaluate_records,
    read_records,
    render_table_text,
    write_records,
    write_table_csv,
)
from .manifest import ManifestEntry, read_manifest, write_manifest
from .pipeline import extract_cues, records_from_extractions
from .reasoner import GoldEchoClient, PromptMode, ReplayClient, append_audit_log, infer
from .robustness import render_sweep_panels, sweep, write_sweep_csv

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_ADAPTER = 5
EXIT_METRIC_NA = 6

log = logging.getLogger("omni_attrib")

ADAPTER_KEYS = ("transcriber", "detector", "audio_embedder", "visual_embedder", "text_embedder")
DEFAULT_BINDINGS = {
    "transcriber": "replay",
    "detector": "replay",
    "audio_embedder": "replay:dim=32",
    "visual_embedder": "replay:dim=32",
    "text_embedder": "token:dim=256",
}
MEDIA_BINDINGS = {
    "transcriber": "replay",
    "detector": "replay",
    "audio_embedder": "spectral:dim=32",
    "visual_embedder": "grid:grid=8",
    "text_embedder": "token:dim=256",
}


def read_config_file(path: Path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = (p.strip() for p in line.partition("="))
        if not sep:
            raise OmniAttribError(f"{path}:{lineno}: expected 'key = value'")
        values[key] = value
    return values


def resolve_bindings(args) -> dict:
    bindings = dict(MEDIA_BINDINGS if getattr(args, "media", False) else DEFAULT_BINDINGS)
    if getattr(args, "config", None):
        cfg = read_config_file(args.config)
        for key in ADAPTER_KEYS:
            if key in cfg:
                bindings[key] = cfg[key]
    for key in ADAPTER_KEYS:
        flag = getattr(args, key, None)
        if flag:
            bindings[key] = flag
    return bindings


def build_client(spec: str, manifest_entries):
    if spec == "gold-echo":
        answers = {
            e.segment.sample_id: e.segment.gold_referent.render()
            for e in manifest_entries
            if e.segment.gold_referent
        }
        return GoldEchoClient(answers)
    if spec.startswith("replay:"):
        return ReplayClient(Path(spec.split(":", 1)[1]))
    if spec.startswith("fixed:"):
        from .reasoner import StubClient, render_model_output

        player = spec.split(":", 1)[1]
        raw = render_model_output(None, "1. Fixed stub.", ParticipantId.parse(player))
        return StubClient(default=raw)
    raise ValueError(f"unknown client binding: {spec!r}")


def _setup_logging(fmt: str) -> None:
    handler = logging.StreamHandler(sys.stderr)
    if fmt == "json":
        class JsonFormatter(logging.Formatter):
            def format(self, record):
                return json.dumps(
                    {"level": record.levelname, "name": record.name, "message": record.getMessage()}
                )

        handler.setFormatter(JsonFormatter())
    else:
        handler.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    logging.basicConfig(level=logging.INFO, handlers=[handler], force=True)


# ---------------------------------------------------------------------------
# Commands.


def cmd_synth(args) -> int:
    spec = SyntheticSceneSpec(
        n_participants=args.participants,
        n_utterances=args.utterances,
        embedding_dim=args.dim,
        identity_noise=args.noise,
        seed=args.seed,
        orthonormal=not args.no_orthonormal,
        task=TaskKind(args.task),
    )
    scene = synthesize_scene(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    scene = materialize_scene(scene, out)
    # manifests carry media paths relative to their own directory, so two
    # identical synth runs produce byte-identical trees wherever they land
    from omni_attrib.core import QuerySegment

    seg = scene.segment
    rel_segment = QuerySegment(
        sample_id=seg.sample_id,
        audio_ref="query.wav",
        video_ref="last_frame.png",
        duration_s=seg.duration_s,
        turn_count=seg.turn_count,
        task=seg.task,
        roster=seg.roster,
        gold_referent=seg.gold_referent,
    )
    entry = ManifestEntry(segment=rel_segment, gold_cues=scene.gold_cues)
    write_manifest([entry], out / "manifest.jsonl")
    log.info("scene %s written under %s", scene.bank.scene_id, out)
    print(str(out / "manifest.jsonl"))
    return EXIT_OK


def cmd_enroll(args) -> int:
    bank_dir = Path(args.bank)
    if (bank_dir / "bank.json").exists():
        bank = load_bank(bank_dir)
    else:
        bank = ReferenceBank(scene_id=args.scene_id or bank_dir.name, entries=[],
                             enrollment_threshold=args.threshold)
    registry = build_registry(resolve_bindings(args))
    staged_voice = None
    if args.voice:
        # reference-clip policy: keep the first 5 seconds
        from .media import read_wav, trim_clip, write_wav

        samples, rate = read_wav(args.voice)
        bank_dir.mkdir(parents=True, exist_ok=True)
        staged_voice = bank_dir / f"candidate_{len(bank.entries)}.wav"
        write_wav(staged_voice, trim_clip(samples, rate), rate)
    voice_emb = registry.audio_embedder.embed_reference_voice(str(staged_voice)) if staged_voice else None
    face_emb = registry.visual_embedder.embed_reference_portrait(args.portrait) if args.portrait else None
    pid, was_new = enroll(bank, voice_emb, face_emb)
    if was_new:
        import shutil

        voice_ref = portrait_ref = ""
        if staged_voice is not None:
            voice_ref = f"ref_{pid.index}.wav"
            staged_voice.rename(bank_dir / voice_ref)
            staged_voice = None
        if args.portrait:
            portrait_ref = f"ref_{pid.index}{Path(args.portrait).suffix}"
            shutil.copyfile(args.portrait, bank_dir / portrait_ref)
        entry = bank.entries[-1]
        bank.entries[-1] = type(entry)(
            participant=entry.participant,
            voice_ref=voice_ref,
            portrait_ref=portrait_ref,
            voice_embedding=entry.voice_embedding,
            face_embedding=entry.face_embedding,
        )
    if staged_voice is not None and staged_voice.exists():
        staged_voice.unlink()  # matched an existing identity; drop the staging copy
    save_bank(bank, bank_dir)
    print(json.dumps({"participant": pid.render(), "was_new": was_new}))
    return EXIT_OK


def _load_inputs(args):
    entries = read_manifest(Path(args.manifest))
    bank_dir = Path(args.bank)
    bank = load_bank(bank_dir)
    return entries, bank, bank_dir


def cmd_attribute(args) -> int:
    entries, bank, bank_dir = _load_inputs(args)
    registry = build_registry(resolve_bindings(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    jobs = max(1, getattr(args, "jobs", 1))
    adapters_safe = all(
        getattr(getattr(registry, slot), "thread_safe", False)
        for slot in ("transcriber", "detector", "audio_embedder", "visual_embedder")
    )
    if jobs > 1 and adapters_safe:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=jobs) as pool:
            extractions = list(
                pool.map(
                    lambda e: extract_cues(e.segment, bank, registry, policy=args.policy, bank_dir=bank_dir),
                    entries,
                )
            )
    else:
        extractions = [
            extract_cues(e.segment, bank, registry, policy=args.policy, bank_dir=bank_dir) for e in entries
        ]
    for entry, ext in zip(entries, extractions):
        dump_attribution(ext.result, out / f"attribution_{entry.segment.sample_id}.jsonl")
    records = records_from_extractions(entries, extractions)
    write_records(records, out / "records.jsonl")
    log.info("attributed %d samples", len(entries))
    print(str(out / "records.jsonl"))
    return EXIT_OK


def cmd_infer(args) -> int:
    entries, bank, bank_dir = _load_inputs(args)
    registry = build_registry(resolve_bindings(args))
    client = build_client(args.client, entries)
    mode = PromptMode(args.mode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    answers_path = out / "answers.jsonl"
    audit_path = out / "audit.jsonl"
    if audit_path.exists():
        audit_path.unlink()
    with answers_path.open("w", encoding="utf-8", newline="\n") as f:
        for entry in entries:
            cues = None
            references = None
            if mode in (PromptMode.WITH_REFERENCE, PromptMode.WITH_REFERENCE_AND_CUES, PromptMode.TRAINING):
                ext = extract_cues(entry.segment, bank, registry, bank_dir=bank_dir)
                references = ext.references
                cues = ext.result.cue_set
            output, bundle = infer(entry.segment, client, mode, references=references, cues=cues)
            append_audit_log(audit_path, entry.segment.sample_id, mode, bundle, output.raw)
            f.write(json.dumps({"sample_id": entry.segment.sample_id, "answer": output.answer.render()}) + "\n")
    print(str(answers_path))
    return EXIT_OK


def cmd_curate(args) -> int:
    entries, bank, bank_dir = _load_inputs(args)
    registry = build_registry(resolve_bindings(args))
    client = build_client(args.client, entries)
    samples = []
    for entry in entries:
        ext = extract_cues(entry.segment, bank, registry, bank_dir=bank_dir)
        samples.append(
            CurationSample(segment=entry.segment, references=tuple(ext.references), cues=ext.result.cue_set)
        )
    store = TraceStore(Path(args.store), fresh=True)
    result = curate_dataset(samples, client, max_attempts=args.max_attempts, store=store)
    failures_path = Path(args.store).with_suffix(".failures.jsonl")
    with failures_path.open("w", encoding="utf-8", newline="\n") as f:
        for failure in result.failures:
            f.write(
                json.dumps(
                    {
                        "sample_id": failure.sample_id,
                        "attempts": failure.attempts,
                        "wrong_answers": list(failure.wrong_answers),
                    }
                )
                + "\n"
            )
    print(json.dumps(result.summary))
    return EXIT_OK


def cmd_review_serve(args) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(
        store_path=Path(args.store),
        data_root=Path(args.data_root) if args.data_root else None,
        manifest_path=Path(args.manifest) if args.manifest else None,
        bank_dir=Path(args.bank) if args.bank else None,
        attribution_dir=Path(args.attribution) if args.attribution else None,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="info")
    return EXIT_OK


def cmd_eval(args) -> int:
    for name, tau in (("tau-sem", args.tau_sem), ("tau-iou", args.tau_iou)):
        if not (0.0 < tau <= 1.0):
            raise ConfigError(f"{name} must be in (0, 1], got {tau}")
    records = read_records(Path(args.records))
    if args.answers:
        answers = {}
        with Path(args.answers).open("r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line:
                    obj = json.loads(line)
                    answers[obj["sample_id"]] = ParticipantId.parse(obj["answer"])
        from dataclasses import replace as dc_replace

        records = [dc_replace(r, predicted_referent=answers.get(r.sample_id)) for r in records]
    registry = build_registry(resolve_bindings(args))
    summary = evaluate_records(
        records,
        registry.text_embedder,
        tau_sem=args.tau_sem,
        tau_iou=args.tau_iou,
        per_sample_mean=args.per_sample_mean,
    )
    metrics = {
        "n_samples": summary.n_samples,
        "verbal_acc": summary.verbal_acc,
        "nonverbal_acc": summary.nonverbal_acc,
        "cue_set_acc": summary.cue_set_acc,
        "referent_acc": summary.referent_acc,
        "verbal_matched": summary.verbal_matched,
        "nonverbal_matched": summary.nonverbal_matched,
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(json.dumps(metrics, sort_keys=True))
    if summary.has_na():
        log.warning("metrics undefined (N/A): %s", ", ".join(summary.na_metrics()))
        return EXIT_METRIC_NA
    return EXIT_OK


def cmd_degrade_sweep(args) -> int:
    entries = read_manifest(Path(args.manifest))
    registry = build_registry(resolve_bindings(args) if args.config else dict(MEDIA_BINDINGS))
    snrs = [s if s == "clean" else float(s) for s in args.snrs.split(",")]
    ratios = [float(r) for r in args.ratios.split(",")]

    def evaluator(bank_dir: Path):
        bank = load_bank(bank_dir)
        from .pipeline import evaluate_manifest

        summary = evaluate_manifest(entries, bank, registry, bank_dir=bank_dir)
        return summary.verbal_acc, summary.nonverbal_acc, summary.referent_acc, summary.n_samples

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = sweep(
        bank_dir=Path(args.bank),
        snr_levels=snrs,
        occlusion_ratios=ratios,
        evaluator=evaluator,
        seed=args.seed,
        work_dir=out / "degraded",
    )
    write_sweep_csv(rows, out / "sweep.csv")
    try:
        render_sweep_panels(rows, out / "sweep.png")
    except ImportError:
        log.warning("matplotlib unavailable; skipping panel rendering")
    print(str(out / "sweep.csv"))
    return EXIT_OK


def cmd_report(args) -> int:
    doc = json.loads(Path(args.cells).read_text(encoding="utf-8"))
    table = aggregate_report(doc["columns"], [(row["name"], row["values"]) for row in doc["rows"]])
    text = render_table_text(table)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.txt").write_text(text, encoding="utf-8")
    write_table_csv(table, out / "report.csv")
    print(text, end="")
    return EXIT_OK


def cmd_export_sft(args) -> int:
    entries, bank, bank_dir = _load_inputs(args)
    registry = build_registry(resolve_bindings(args))
    store = TraceStore(Path(args.store))
    traces, _ = store.replay()
    contexts = {}
    for entry in entries:
        ext = extract_cues(entry.segment, bank, registry, bank_dir=bank_dir)
        contexts[entry.segment.sample_id] = CurationSample(
            segment=entry.segment, references=tuple(ext.references), cues=ext.result.cue_set
        )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    written, skipped = export_training_dataset(
        list(traces.values()),
        lambda sid: contexts[sid],
        out / "sft.jsonl",
        reasoning_steps=args.steps,
    )
    overrides = {}
    for item in args.set or []:
        key, _, value = item.partition("=")
        field_type = None
        from .curator import TrainingConfig

        if key in TrainingConfig.__dataclass_fields__:
            field_type = TrainingConfig.__dataclass_fields__[key].type
        if field_type == "int":
            overrides[key] = int(value)
        elif field_type == "float":
            overrides[key] = float(value)
        else:
            overrides[key] = value
    config = emit_training_config(overrides)
    write_training_config(config, out / "train_config.txt")
    print(json.dumps({"written": written, "skipped": skipped, "dataset": str(out / "sft.jsonl")}))
    if skipped:
        log.warning("skipped %d non-exportable traces", skipped)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser.


def _add_adapter_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file; flags override it")
    p.add_argument("--media", action="store_true", help="default to media-based embedders (spectral/grid)")
    for key in ADAPTER_KEYS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key, help=f"{key} binding, e.g. 'replay' or 'spectral:dim=32'")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omni-attrib",
        description="Reference-guided identity attribution, curation, and evaluation pipeline.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--log-format", choices=["text", "json"], default="text")
    parser.add_argument("--jobs", type=int, default=1, help="internal parallelism bound (adapter calls)")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a deterministic synthetic scene")
    p.add_argument("--participants", type=int, default=5)
    p.add_argument("--utterances", type=int, default=20)
    p.add_argument("--dim", type=int, default=32)
    p.add_argument("--noise", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-orthonormal", action="store_true")
    p.add_argument("--task", choices=["STI", "PCR"], default="PCR")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("enroll", help="enroll a candidate into a reference bank")
    p.add_argument("--bank", required=True)
    p.add_argument("--scene-id", default="")
    p.add_argument("--voice", help="candidate voice clip (WAV)")
    p.add_argument("--portrait", help="candidate portrait image")
    p.add_argument("--threshold", type=float, default=0.5)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_enroll, media=True)

    p = sub.add_parser("attribute", help="extract identity-attributed cues for a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--policy", choices=[POLICY_INDEPENDENT, POLICY_ONE_TO_ONE], default=POLICY_INDEPENDENT)
    p.add_argument("--out", required=True)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_attribute)

    p = sub.add_parser("infer", help="run the reasoner over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--client", required=True, help="replay:<file> | gold-echo | fixed:<PlayerN>")
    p.add_argument("--mode", choices=[m.value for m in PromptMode], default=PromptMode.WITH_REFERENCE_AND_CUES.value)
    p.add_argument("--out", required=True)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("curate", help="rejection-sample reasoning traces into a store")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--client", required=True)
    p.add_argument("--store", required=True)
    p.add_argument("--max-attempts", type=int, default=10)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("review-serve", help="serve the review API over a trace store")
    p.add_argument("--store", required=True)
    p.add_argument("--data-root")
    p.add_argument("--manifest")
    p.add_argument("--bank")
    p.add_argument("--attribution", help="attribute output dir, for score vectors in trace detail")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8097)
    p.set_defaults(func=cmd_review_serve)

    p = sub.add_parser("eval", help="score prediction records")
    p.add_argument("--records", required=True)
    p.add_argument("--answers", help="answers.jsonl from infer, for referent accuracy")
    p.add_argument("--tau-sem", type=float, default=0.9)
    p.add_argument("--tau-iou", type=float, default=0.9)
    p.add_argument("--per-sample-mean", action="store_true")
    p.add_argument("--out", required=True)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("degrade-sweep", help="degradation grid over a bank + manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--snrs", default="clean,20,10,5")
    p.add_argument("--ratios", default="0.0,0.1,0.3,0.4")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_degrade_sweep, media=True)

    p = sub.add_parser("report", help="aggregate per-task accuracy cells into a table")
    p.add_argument("--cells", required=True, help="JSON file: {columns: [...], rows: [{name, values}]}")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("export-sft", help="export accepted traces as a fine-tuning dataset")
    p.add_argument("--store", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--bank", required=True)
    p.add_argument("--steps", type=int, choices=[1, 2, 3], default=2)
    p.add_argument("--set", action="append", help="training-config override key=value")
    p.add_argument("--out", required=True)
    _add_adapter_flags(p)
    p.set_defaults(func=cmd_export_sft)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    _setup_logging(args.log_format)
    try:
        return args.func(args)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (MissingMediaError, MalformedRecordError, FileNotFoundError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (ClientError, ValueError) as exc:
        log.error("adapter/client error: %s", exc)
        return EXIT_ADAPTER
    except OmniAttribError as exc:
        log.error("pipeline error: %s", exc)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
