// Client-side review session: queue paging, the open trace, per-trace draft
// revisions that survive navigation, and decision submission with optimistic
// updates rolled back on 409/422.
//
// Pure state + injected ApiClient; the DOM layer just renders snapshots.

import { ApiClient, ApiError, NetworkError } from './api.js';
import { DecisionRequest, DraftRevision, QueueEntry, TraceDetail } from './types.js';
import { validateDecision } from './validation.js';

export type SubmissionState = 'idle' | 'submitting' | 'conflict' | 'rejected' | 'network-error';

export interface SessionSnapshot {
  queue: QueueEntry[];
  queueTotal: number;
  offset: number;
  limit: number;
  current: TraceDetail | null;
  draft: DraftRevision | null;
  submission: SubmissionState;
  banner: string | null;
  decidedCount: number;
}

function freshDraft(): DraftRevision {
  return { correction_type: '', note: '', edited_think_block: '' };
}

function randomKey(): string {
  return `ui-${Date.now().toString(36)}-${Math.random().toString(36).slice(2, 10)}`;
}

export class ReviewSession {
  private queue: QueueEntry[] = [];
  private queueTotal = 0;
  private offset = 0;
  private limit: number;
  private current: TraceDetail | null = null;
  private drafts = new Map<string, DraftRevision>(); // unsaved drafts survive navigation
  private submission: SubmissionState = 'idle';
  private banner: string | null = null;
  private decidedCount = 0;
  private keyFactory: () => string;

  constructor(
    private api: ApiClient,
    options: { limit?: number; keyFactory?: () => string } = {},
  ) {
    this.limit = options.limit ?? 50;
    this.keyFactory = options.keyFactory ?? randomKey;
  }

  snapshot(): SessionSnapshot {
    return {
      queue: [...this.queue],
      queueTotal: this.queueTotal,
      offset: this.offset,
      limit: this.limit,
      current: this.current,
      draft: this.current ? this.draftFor(this.current.trace_id) : null,
      submission: this.submission,
      banner: this.banner,
      decidedCount: this.decidedCount,
    };
  }

  draftFor(traceId: string): DraftRevision {
    let draft = this.drafts.get(traceId);
    if (!draft) {
      draft = freshDraft();
      this.drafts.set(traceId, draft);
    }
    return draft;
  }

  updateDraft(patch: Partial<DraftRevision>): void {
    if (!this.current) return;
    const draft = this.draftFor(this.current.trace_id);
    Object.assign(draft, patch);
  }

  /** Submit is enabled only when the draft satisfies the service's rules. */
  canSubmitRevise(): boolean {
    if (!this.current) return false;
    return validateDecision(this.reviseBody()).ok;
  }

  private reviseBody(): DecisionRequest {
    const draft = this.current ? this.draftFor(this.current.trace_id) : freshDraft();
    return {
      action: 'revise',
      revisions: [
        {
          correction_type: draft.correction_type,
          note: draft.note,
          edited_think_block: draft.edited_think_block,
        },
      ],
    };
  }

  async loadQueue(offset = this.offset): Promise<void> {
    try {
      const page = await this.api.getQueue('pending', this.limit, offset);
      this.queue = page.entries;
      this.queueTotal = page.total;
      this.offset = offset;
      // a successful page load never clears conflict/rejection banners;
      // those persist until the reviewer acts on the refreshed state
    } catch (err) {
      this.handleLoadError(err);
    }
  }

  async openTrace(traceId: string): Promise<void> {
    try {
      this.current = await this.api.getTrace(traceId);
      this.submission = 'idle';
      this.banner = null;
      const draft = this.draftFor(traceId);
      if (!draft.edited_think_block) {
        draft.edited_think_block = this.current.active_think_block;
      }
    } catch (err) {
      this.handleLoadError(err);
    }
  }

  async openNextPending(): Promise<void> {
    await this.loadQueue(this.offset);
    const next = this.queue.find((e) => e.trace_id !== this.current?.trace_id) ?? this.queue[0];
    if (next) {
      await this.openTrace(next.trace_id);
    } else {
      this.current = null;
    }
  }

  async accept(): Promise<boolean> {
    return this.submit({ action: 'accept' });
  }

  async discard(): Promise<boolean> {
    return this.submit({ action: 'discard' });
  }

  async revise(): Promise<boolean> {
    if (!this.canSubmitRevise()) {
      this.submission = 'rejected';
      this.banner = 'revision draft is incomplete';
      return false;
    }
    return this.submit(this.reviseBody());
  }

  /**
   * Optimistic submit: the trace leaves the visible queue immediately and is
   * restored (with refreshed server state) when the service answers 409/422.
   * After a success the queue auto-advances to the next pending trace.
   */
  private async submit(body: DecisionRequest): Promise<boolean> {
    if (!this.current) return false;
    const traceId = this.current.trace_id;
    const check = validateDecision(body);
    if (!check.ok) {
      this.submission = 'rejected';
      this.banner = check.errors.join('; ');
      return false;
    }
    const request: DecisionRequest = { ...body, idempotency_key: this.keyFactory() };
    const previousQueue = this.queue;
    this.queue = this.queue.filter((e) => e.trace_id !== traceId); // optimistic
    this.submission = 'submitting';
    try {
      const updated = await this.api.postDecision(traceId, request);
      this.current = updated;
      this.drafts.delete(traceId);
      this.submission = 'idle';
      this.banner = null;
      this.decidedCount++;
      await this.openNextPending();
      return true;
    } catch (err) {
      this.queue = previousQueue; // roll back the optimistic removal
      if (err instanceof ApiError && err.status === 409) {
        this.submission = 'conflict';
        this.banner = 'trace was decided elsewhere; state refreshed';
        await this.refreshCurrent(traceId);
        await this.loadQueue(this.offset);
      } else if (err instanceof ApiError && err.status === 422) {
        this.submission = 'rejected';
        this.banner = `service rejected the decision: ${JSON.stringify(err.body)}`;
      } else if (err instanceof NetworkError) {
        this.submission = 'network-error';
        this.banner = 'network failure; retry when the service is reachable';
      } else {
        this.submission = 'rejected';
        this.banner = String(err);
      }
      return false;
    }
  }

  private async refreshCurrent(traceId: string): Promise<void> {
    try {
      this.current = await this.api.getTrace(traceId);
    } catch {
      // keep the stale copy; the banner already signals the conflict
    }
  }

  private handleLoadError(err: unknown): void {
    if (err instanceof NetworkError) {
      this.submission = 'network-error';
      this.banner = 'network failure; retry when the service is reachable';
    } else if (err instanceof ApiError) {
      this.banner = `service error ${err.status}`;
    } else {
      this.banner = String(err);
    }
  }
}
