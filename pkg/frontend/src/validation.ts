// Client-side decision validation.
//
// The submit button stays disabled until this passes, so the UI can never
// construct a request the service rejects with 422. The contract test proves
// the superset relation against the live service using shared fixtures.

import { CORRECTION_TYPE_NAMES, DecisionRequest } from './types.js';

const ACTIONS = new Set(['accept', 'discard', 'revise']);

const SHORT_CODES = new Set(['a', 'b', 'c']);
const FULL_NAMES = new Set<string>(CORRECTION_TYPE_NAMES);

export interface ValidationResult {
  ok: boolean;
  errors: string[];
}

export function validateDecision(body: DecisionRequest): ValidationResult {
  const errors: string[] = [];
  if (typeof body.action !== 'string' || !ACTIONS.has(body.action)) {
    errors.push(`unknown action: ${String(body.action)}`);
  }
  const revisions = body.revisions ?? [];
  if (!Array.isArray(revisions)) {
    errors.push('revisions must be a list');
  } else {
    if (body.action === 'revise' && revisions.length === 0) {
      errors.push('revise needs at least one revision');
    }
    revisions.forEach((rev, i) => {
      if (rev === null || typeof rev !== 'object') {
        errors.push(`revision ${i} must be an object`);
        return;
      }
      const ct = (rev as { correction_type?: unknown }).correction_type;
      if (typeof ct !== 'string' || !(SHORT_CODES.has(ct) || FULL_NAMES.has(ct))) {
        errors.push(`revision ${i}: unknown correction type ${String(ct)}`);
      }
      const edited = (rev as { edited_think_block?: unknown }).edited_think_block;
      if (typeof edited !== 'string' || edited.trim().length === 0) {
        errors.push(`revision ${i}: edited think block must be non-empty`);
      }
      const note = (rev as { note?: unknown }).note;
      if (note !== undefined && typeof note !== 'string') {
        errors.push(`revision ${i}: note must be a string`);
      }
    });
  }
  if (body.idempotency_key !== undefined && typeof body.idempotency_key !== 'string') {
    errors.push('idempotency key must be a string');
  }
  return { ok: errors.length === 0, errors };
}
