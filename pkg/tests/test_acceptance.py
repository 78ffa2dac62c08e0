"""Acceptance suite: one test per release criterion, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py -s` to see the per-criterion lines.
"""

from __future__ import annotations

import contextlib
import random
import time

import numpy as np
import pytest

from omni_attrib.adapters import TokenOverlapTextEmbedder, materialize_scene, synthesize_scene
from omni_attrib.adapters.synthetic import SyntheticSceneSpec
from omni_attrib.attribution import attribute_detection, attribute_speaker, build_cue_set
from omni_attrib.bank import ReferencePair
from omni_attrib.core import (
    AttributedDetection,
    AttributedUtterance,
    BoundingBox,
    ParticipantId,
    SocialCueSet,
    TaskKind,
    Utterance,
)
from omni_attrib.curator import (
    MAX_ATTEMPTS,
    Decision,
    ReasoningTrace,
    TraceFailure,
    TraceStore,
    apply_review_decision,
    emit_training_config,
    generate_trace,
)
from omni_attrib.errors import InvalidTransitionError, RevisionValidationError
from omni_attrib.evaluation import (
    EvalRecord,
    aggregate_report,
    evaluate_records,
    match_boxes,
    match_utterances,
)
from omni_attrib.reasoner import PromptMode, assemble_prompt, parse_model_output, prompt_text
from omni_attrib.robustness import CLEAN, inject_noise, occlude, realized_snr_db

from oracles import argmax_oracle, cosine_oracle, exhaustive_matching_oracle, iou_oracle
from test_curator import CountingClient, raw_answer, sample as curation_sample
from test_reasoner import EXAMPLE_OUTPUT
from test_robustness import media_registry, scene_evaluator


@contextlib.contextmanager
def criterion(name: str):
    started = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - started
    print(f"[PASS] {name} ({elapsed:.2f}s)")


def test_table_arithmetic():
    with criterion("table-arithmetic: every printed Avg cell reproduced at 2 decimals"):
        started = time.perf_counter()
        interaction = aggregate_report(
            ["STI", "PCR"],
            [
                ("ego4d-ours", [40.57, 45.54]),
                ("youtube-ours", [37.46, 56.62]),
                ("ego4d-ref-gemini", [40.57, 44.64]),
            ],
        )
        attribution = aggregate_report(
            ["Verbal", "Non-Verbal"],
            [
                ("ego4d-ours", [71.09, 86.48]),
                ("youtube-ours", [67.57, 86.33]),
                ("youtube-ref-gemini", [60.61, 65.45]),
            ],
        )
        by_table = {
            ("interaction", "ego4d-ours"): "43.06",
            ("interaction", "youtube-ours"): "47.04",
            ("interaction", "ego4d-ref-gemini"): "42.61",
            ("attribution", "ego4d-ours"): "78.79",
            ("attribution", "youtube-ours"): "76.95",
            ("attribution", "youtube-ref-gemini"): "63.03",
        }
        for name, row in interaction.rows:
            assert row[-1] == by_table[("interaction", name)], name
        for name, row in attribution.rows:
            assert row[-1] == by_table[("attribution", name)], name
        assert time.perf_counter() - started < 1.0


def _planted_text_instance(rng, n_pred, n_gold):
    """Utterance lists whose embedding cosines cluster around the threshold."""
    dim = 3
    pred_vecs = rng.uniform(0.2, 1.0, size=(n_pred, dim))
    gold_vecs = rng.uniform(0.2, 1.0, size=(n_gold, dim))

    class PlantedEmbedder:
        dim = 3

        def embed_text(self, text):
            kind, idx = text.split(":")
            return (pred_vecs if kind == "p" else gold_vecs)[int(idx)]

    pred = [AttributedUtterance(Utterance(i, i + 0.5, f"p:{i}"), ParticipantId(0)) for i in range(n_pred)]
    gold = [AttributedUtterance(Utterance(i, i + 0.5, f"g:{i}"), ParticipantId(0)) for i in range(n_gold)]
    scores = [[cosine_oracle(pred_vecs[i], gold_vecs[j]) for j in range(n_gold)] for i in range(n_pred)]
    return pred, gold, PlantedEmbedder(), scores


def _jittered_box_instance(rng, n_pred, n_gold):
    gold_boxes = []
    for j in range(n_gold):
        x0 = 0.02 + j * (0.9 / max(n_gold, 1))
        gold_boxes.append(BoundingBox(x0, 0.1, x0 + 0.08, 0.9))
    pred_boxes = []
    for i in range(n_pred):
        src = gold_boxes[int(rng.integers(0, n_gold))] if n_gold else BoundingBox(0.1, 0.1, 0.2, 0.9)
        # jitter keeps IoU in a band straddling the 0.9 threshold
        d = rng.uniform(-0.004, 0.004, size=4)
        pred_boxes.append(
            BoundingBox(
                min(max(src.x_min + d[0], 0.0), 0.98),
                min(max(src.y_min + d[1], 0.0), 0.98),
                max(min(src.x_max + d[2], 1.0), 0.02),
                max(min(src.y_max + d[3], 1.0), 0.02),
            )
        )
    pred = [AttributedDetection(b, ParticipantId(0)) for b in pred_boxes]
    gold = [AttributedDetection(b, ParticipantId(0)) for b in gold_boxes]
    scores = [[iou_oracle(p, g) for g in gold_boxes] for p in pred_boxes]
    return pred, gold, scores


def test_metric_oracle_equivalence():
    with criterion("metric-oracle-equivalence: >=500 instances, 0 mismatches, <30s"):
        started = time.perf_counter()
        rng = np.random.default_rng(2024)
        mismatches = 0
        for k in range(300):
            n_pred, n_gold = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            pred, gold, embedder, scores = _planted_text_instance(rng, n_pred, n_gold)
            got = list(match_utterances(pred, gold, embedder).pairs)
            expected = exhaustive_matching_oracle(scores, 0.9)
            if got != expected:
                mismatches += 1
        for k in range(300):
            n_pred, n_gold = int(rng.integers(1, 6)), int(rng.integers(1, 6))
            pred, gold, scores = _jittered_box_instance(rng, n_pred, n_gold)
            got = list(match_boxes(pred, gold).pairs)
            expected = exhaustive_matching_oracle(scores, 0.9)
            if got != expected:
                mismatches += 1
        assert mismatches == 0
        assert time.perf_counter() - started < 30.0


def test_attribution_oracle_equivalence():
    with criterion("attribution-oracle-equivalence: >=1000 instances incl. tie-breaks"):
        rng = np.random.default_rng(77)
        mismatches = 0
        for k in range(1000):
            n_refs = int(rng.integers(2, 7))
            dim = int(rng.integers(4, 17))
            vectors = rng.normal(size=(n_refs, dim))
            if k % 10 == 0 and n_refs >= 3:
                vectors[2] = vectors[0]  # exact duplicate forces the tie-break
            refs = [
                ReferencePair(participant=ParticipantId(i), voice_embedding=vectors[i], face_embedding=vectors[i])
                for i in range(n_refs)
            ]
            emb = vectors[0] if k % 10 == 0 else rng.normal(size=dim)
            speaker, _ = attribute_speaker(emb, refs)
            visual, _ = attribute_detection(emb, refs)
            expected = argmax_oracle(emb, vectors)
            if speaker.index != expected or visual.index != expected:
                mismatches += 1
        assert mismatches == 0


def _run_synthetic(spec: SyntheticSceneSpec):
    scene = synthesize_scene(spec)
    obs = scene.observations
    result = build_cue_set(
        obs.utterances, obs.utterance_embeddings, obs.boxes, obs.box_embeddings, list(scene.bank.entries)
    )
    record = EvalRecord(
        sample_id=scene.segment.sample_id,
        predicted_referent=None,
        gold_referent=scene.segment.gold_referent,
        predicted_cues=result.cue_set,
        gold_cues=scene.gold_cues,
    )
    summary = evaluate_records([record], TokenOverlapTextEmbedder())
    # the oracle recomputation: plain-python argmax over the same arrays
    voice_refs = [e.voice_embedding for e in scene.bank.entries]
    face_refs = [e.face_embedding for e in scene.bank.entries]
    v_hits = sum(
        1
        for emb, true in zip(obs.utterance_embeddings, obs.true_speakers)
        if argmax_oracle(emb, voice_refs) == true.index
    )
    n_hits = sum(
        1
        for emb, true in zip(obs.box_embeddings, obs.true_identities)
        if argmax_oracle(emb, face_refs) == true.index
    )
    oracle_verbal = v_hits / len(obs.utterance_embeddings)
    oracle_nonverbal = n_hits / len(obs.box_embeddings)
    return summary, oracle_verbal, oracle_nonverbal


def test_synthetic_end_to_end():
    with criterion("synthetic-end-to-end: noise 0 exact 1.0; noise 0.1 below 1.0 within oracle band"):
        summary, ov, on = _run_synthetic(SyntheticSceneSpec(5, 200, embedding_dim=32, identity_noise=0.0, seed=1))
        assert summary.verbal_acc == 1.0
        assert summary.nonverbal_acc == 1.0
        assert summary.cue_set_acc == 1.0
        assert (ov, on) == (1.0, 1.0)

        v_accs, n_accs, ov_accs, on_accs = [], [], [], []
        for seed in range(20):
            spec = SyntheticSceneSpec(
                5, 200, embedding_dim=2, identity_noise=0.1, seed=seed, orthonormal=False
            )
            summary, ov, on = _run_synthetic(spec)
            v_accs.append(summary.verbal_acc)
            n_accs.append(summary.nonverbal_acc)
            ov_accs.append(ov)
            on_accs.append(on)
        mean_v, mean_n = np.mean(v_accs), np.mean(n_accs)
        assert mean_v < 1.0
        assert mean_n < 1.0
        assert abs(mean_v - np.mean(ov_accs)) <= 0.02
        assert abs(mean_n - np.mean(on_accs)) <= 0.02


def test_rejection_sampling_contract():
    with criterion("rejection-sampling: exactly min(first-correct, 10) calls"):
        for first_correct in range(1, 13):
            outputs = [raw_answer("Player0")] * (first_correct - 1) + [raw_answer("Player1")] * 5
            client = CountingClient(list(outputs))
            result = generate_trace(curation_sample(), client)
            expected_calls = min(first_correct, MAX_ATTEMPTS)
            assert client.calls == expected_calls, (first_correct, client.calls)
            if first_correct <= MAX_ATTEMPTS:
                assert isinstance(result, ReasoningTrace)
                assert result.attempts_used == first_correct
            else:
                assert isinstance(result, TraceFailure)
        never = CountingClient([raw_answer("Player2")] * 30)
        result = generate_trace(curation_sample(), never)
        assert isinstance(result, TraceFailure)
        assert never.calls == MAX_ATTEMPTS
        assert len(result.wrong_answers) == MAX_ATTEMPTS


def test_prompt_fidelity():
    with criterion("prompt-fidelity: bundles byte-equal golden files; example parses to Player2"):
        from importlib import resources

        from test_reasoner import cues, references, segment

        for task in (TaskKind.PCR, TaskKind.STI):
            for mode in PromptMode:
                bundle = assemble_prompt(task, mode, segment(task), references=references(), cues=cues())
                name = f"{task.value.lower()}_{mode.value}.txt"
                golden = resources.files("omni_attrib.prompts").joinpath(name).read_bytes()
                assert bundle.system_text.encode("utf-8") == golden, name
                for marker in ("# Required reasoning structure", "<think> ... </think>", "<answer> PlayerN </answer>"):
                    assert marker in bundle.system_text, (name, marker)
        parsed = parse_model_output(EXAMPLE_OUTPUT)
        assert parsed.answer.render() == "Player2"
        assert parsed.think_block.strip().startswith("1. Last speaker: Player4")


def test_degradation_fidelity(tmp_path):
    with criterion("degradation-fidelity: SNR +-0.1 dB, occlusion +-0.01, identity no-ops, direction"):
        rng = np.random.default_rng(3)
        tone = np.sin(2 * np.pi * 440 * np.arange(16000) / 16000)
        for target in (20.0, 10.0, 5.0):
            noisy = inject_noise(tone, target, seed=11)
            assert abs(realized_snr_db(tone, noisy) - target) <= 0.1
        assert np.array_equal(inject_noise(tone, CLEAN, seed=11), tone)

        image = rng.integers(10, 250, size=(100, 100, 3)).astype(np.uint8)
        for ratio in (0.1, 0.3, 0.4):
            masked = occlude(image, ratio, seed=5)
            frac = ((masked == 0).all(axis=2)).sum() / (100 * 100)
            assert abs(frac - ratio) <= 0.01, ratio
        assert np.array_equal(occlude(image, 0.0, seed=5), image)

        from omni_attrib.manifest import ManifestEntry
        from omni_attrib.robustness import sweep

        registry = media_registry()
        clean_accs, heavy_accs = [], []
        for seed in range(20):
            scene_dir = tmp_path / f"scene_{seed}"
            scene = materialize_scene(synthesize_scene(SyntheticSceneSpec(4, 3, seed=seed)), scene_dir)
            entries = [ManifestEntry(segment=scene.segment, gold_cues=scene.gold_cues)]
            rows = sweep(
                scene_dir / "bank",
                snr_levels=[CLEAN],
                occlusion_ratios=[0.0, 0.4],
                evaluator=scene_evaluator(entries, registry),
                seed=seed,
                work_dir=scene_dir / "work",
            )
            by_ratio = {r.occlusion_ratio: r.nonverbal_acc for r in rows}
            clean_accs.append(by_ratio[0.0])
            heavy_accs.append(by_ratio[0.4])
        assert np.mean(clean_accs) == 1.0
        assert np.mean(heavy_accs) <= np.mean(clean_accs)


def test_training_config_fidelity():
    with criterion("training-config: rank 8, lr 1e-4, epochs 3, cosine, warmup 0.10, context 16384"):
        cfg = emit_training_config()
        assert cfg.adapter_rank == 8
        assert cfg.learning_rate == 1e-4
        assert cfg.epochs == 3
        assert cfg.scheduler == "cosine"
        assert cfg.warmup_fraction == 0.10
        assert cfg.context_length == 16384
        assert cfg.per_device_batch == 1
        assert cfg.grad_accum == 1


def test_curation_state_machine(tmp_path):
    with criterion("curation-state-machine: single terminal state; replay reconstructs state"):
        from test_curator import pending_trace

        rng = random.Random(99)
        for run in range(300):
            trace = pending_trace(f"s{run}")
            terminal = None
            for _ in range(rng.randint(1, 6)):
                action = rng.choice(["accept", "discard", "revise"])
                decision = (
                    Decision(action, ({"correction_type": "a", "note": "", "edited_think_block": "1. E."},))
                    if action == "revise"
                    else Decision(action)
                )
                try:
                    trace = apply_review_decision(trace, decision)
                except (InvalidTransitionError, RevisionValidationError):
                    assert terminal is not None
                    continue
                assert terminal is None, "reached a second terminal state"
                terminal = trace.status

        store = TraceStore(tmp_path / "acc_store.jsonl")
        state = {}
        rng = random.Random(7)
        for i in range(40):
            trace = pending_trace(f"s{i}", seq=i)
            store.append_created(trace)
            action = rng.choice(["accept", "discard", "revise", None])
            if action is None:
                state[trace.trace_id] = trace
                continue
            decision = (
                Decision(action, ({"correction_type": "b", "note": "n", "edited_think_block": f"1. E{i}."},))
                if action == "revise"
                else Decision(action)
            )
            updated = apply_review_decision(trace, decision)
            store.append_decision(
                trace.trace_id,
                action,
                updated.revisions if action == "revise" else (),
                idempotency_key=f"k{i}",
            )
            state[trace.trace_id] = updated
        replayed, _ = TraceStore(tmp_path / "acc_store.jsonl").replay()
        assert replayed == state
