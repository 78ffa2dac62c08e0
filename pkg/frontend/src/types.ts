// API payload types for the review service.

export type TraceStatus = 'pending' | 'accepted' | 'discarded' | 'revised';

export type DecisionAction = 'accept' | 'discard' | 'revise';

export type CorrectionType = 'a' | 'b' | 'c';

export const CORRECTION_TYPES: { value: CorrectionType; label: string }[] = [
  { value: 'a', label: 'a) remove incorrect non-verbal cues' },
  { value: 'b', label: 'b) add missing salient evidence' },
  { value: 'c', label: "c) add other participants' cues" },
];

// Full names the store writes; the service accepts either form.
export const CORRECTION_TYPE_NAMES = [
  'a_remove_incorrect_nonverbal',
  'b_add_missing_evidence',
  'c_add_other_participants_cues',
] as const;

export interface QueueEntry {
  trace_id: string;
  sample_id: string;
  task: string;
  attempts_used: number;
  created_at: string;
  status: TraceStatus;
}

export interface QueuePage {
  total: number;
  offset: number;
  limit: number;
  entries: QueueEntry[];
}

export interface Revision {
  correction_type: string;
  note: string;
  edited_think_block: string;
}

export interface AttributionRow {
  kind: 'utterance' | 'detection';
  index: number;
  chosen: string;
  scores: number[];
}

export interface ReferenceMedia {
  participant: string;
  voice: string | null;
  portrait: string | null;
}

export interface TraceMedia {
  query_audio?: string | null;
  query_video?: string | null;
  references?: ReferenceMedia[];
}

export interface TraceDetail {
  trace_id: string;
  sample_id: string;
  task: string;
  cue_block: string;
  think_block: string;
  answer: string;
  attempts_used: number;
  status: TraceStatus;
  revisions: Revision[];
  created_seq: number;
  created_at: string;
  active_think_block: string;
  attribution: AttributionRow[];
  media: TraceMedia;
  replayed?: boolean;
}

export interface DecisionRequest {
  action: DecisionAction | string;
  revisions?: Revision[];
  idempotency_key?: string;
}

export interface DraftRevision {
  correction_type: CorrectionType | '';
  note: string;
  edited_think_block: string;
}
