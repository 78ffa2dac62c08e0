// End-to-end review flows against the seeded live service.

import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { ReviewSession } from '../src/session.js';
import { startService, TestService } from './helpers/server.js';

let service: TestService;

beforeAll(async () => {
  service = await startService([
    { trace_id: 't-s0', sample_id: 's0' },
    { trace_id: 't-s1', sample_id: 's1' },
    { trace_id: 't-s2', sample_id: 's2' },
    { trace_id: 't-s3', sample_id: 's3' },
    { trace_id: 't-s4', sample_id: 's4' },
  ]);
}, 30000);

afterAll(async () => {
  await service?.stop();
});

function newSession(): ReviewSession {
  let n = 0;
  return new ReviewSession(new ApiClient({ baseUrl: service.baseUrl }), {
    keyFactory: () => `test-key-${Math.random().toString(36).slice(2)}-${n++}`,
  });
}

describe('review flows', () => {
  it('accept removes the trace from the pending queue and auto-advances', async () => {
    const session = newSession();
    await session.loadQueue();
    const before = session.snapshot();
    expect(before.queue.length).toBeGreaterThanOrEqual(2);
    const first = before.queue[0].trace_id;
    await session.openTrace(first);
    const ok = await session.accept();
    expect(ok).toBe(true);
    const after = session.snapshot();
    expect(after.queue.map((e) => e.trace_id)).not.toContain(first);
    expect(after.current).not.toBeNull();
    expect(after.current?.trace_id).not.toBe(first);
    expect(after.decidedCount).toBe(1);
    expect(after.submission).toBe('idle');
  });

  it('discard flow reaches the discarded state server-side', async () => {
    const session = newSession();
    await session.loadQueue();
    const target = session.snapshot().queue[0].trace_id;
    await session.openTrace(target);
    const ok = await session.discard();
    expect(ok).toBe(true);
    const res = await fetch(`${service.baseUrl}/trace/${target}`);
    const detail = await res.json();
    expect(detail.status).toBe('discarded');
  });

  it('revise flow: draft gating, submission, edited block persisted', async () => {
    const session = newSession();
    await session.loadQueue();
    const target = session.snapshot().queue[0].trace_id;
    await session.openTrace(target);

    // draft pre-filled with the original think block but missing a type
    expect(session.canSubmitRevise()).toBe(false);
    session.updateDraft({ edited_think_block: '' });
    session.updateDraft({ correction_type: 'a' });
    expect(session.canSubmitRevise()).toBe(false); // empty edit still blocks
    session.updateDraft({ edited_think_block: '1. Corrected step.\n2. Decision.' });
    expect(session.canSubmitRevise()).toBe(true);

    const ok = await session.revise();
    expect(ok).toBe(true);
    const res = await fetch(`${service.baseUrl}/trace/${target}`);
    const detail = await res.json();
    expect(detail.status).toBe('revised');
    expect(detail.active_think_block).toBe('1. Corrected step.\n2. Decision.');
    expect(detail.revisions).toHaveLength(1);
    expect(detail.revisions[0].correction_type).toBe('a_remove_incorrect_nonverbal');
  });

  it('conflicting decision from a second session surfaces as conflict state', async () => {
    const sessionA = newSession();
    const sessionB = newSession();
    await sessionA.loadQueue();
    const target = sessionA.snapshot().queue[0].trace_id;
    await sessionA.openTrace(target);
    await sessionB.openTrace(target);

    expect(await sessionA.accept()).toBe(true);
    expect(await sessionB.discard()).toBe(false);

    const snapB = sessionB.snapshot();
    expect(snapB.submission).toBe('conflict');
    expect(snapB.banner).toMatch(/decided elsewhere/);
    // B's view refreshed to the winning state
    expect(snapB.current?.trace_id).toBe(target);
    expect(snapB.current?.status).toBe('accepted');
    // and the rolled-back queue no longer lists the decided trace
    expect(snapB.queue.map((e) => e.trace_id)).not.toContain(target);
  });

  it('drafts survive navigation between traces', async () => {
    const session = newSession();
    await session.loadQueue();
    const snap = session.snapshot();
    if (snap.queue.length < 2) return; // queue drained by earlier tests
    const [first, second] = snap.queue.map((e) => e.trace_id);
    await session.openTrace(first);
    session.updateDraft({ correction_type: 'b', edited_think_block: 'draft in progress' });
    await session.openTrace(second);
    await session.openTrace(first);
    const draft = session.snapshot().draft;
    expect(draft?.correction_type).toBe('b');
    expect(draft?.edited_think_block).toBe('draft in progress');
  });

  it('network failure surfaces a retry banner', async () => {
    const dead = new ReviewSession(new ApiClient({ baseUrl: 'http://127.0.0.1:1' }));
    await dead.loadQueue();
    const snap = dead.snapshot();
    expect(snap.submission).toBe('network-error');
    expect(snap.banner).toMatch(/network failure/);
  });
});
