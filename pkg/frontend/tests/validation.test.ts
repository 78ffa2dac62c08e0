import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { validateDecision } from '../src/validation.js';
import { DecisionRequest } from '../src/types.js';

interface FixtureCase {
  name: string;
  label: 'valid' | 'invalid';
  body: DecisionRequest;
}

const fixtures: { cases: FixtureCase[] } = JSON.parse(
  readFileSync(join(__dirname, '..', 'contract', 'fixtures.json'), 'utf-8'),
);

describe('decision validation against shared fixtures', () => {
  for (const fixture of fixtures.cases) {
    it(`${fixture.label}: ${fixture.name}`, () => {
      const result = validateDecision(fixture.body);
      if (fixture.label === 'valid') {
        expect(result.errors).toEqual([]);
        expect(result.ok).toBe(true);
      } else {
        expect(result.ok).toBe(false);
        expect(result.errors.length).toBeGreaterThan(0);
      }
    });
  }
});

describe('validation details', () => {
  it('accepts both short codes and full correction-type names', () => {
    for (const ct of ['a', 'b', 'c', 'a_remove_incorrect_nonverbal', 'c_add_other_participants_cues']) {
      const result = validateDecision({
        action: 'revise',
        revisions: [{ correction_type: ct, note: '', edited_think_block: 'x' }],
      });
      expect(result.ok).toBe(true);
    }
  });

  it('rejects whitespace-only think blocks', () => {
    const result = validateDecision({
      action: 'revise',
      revisions: [{ correction_type: 'a', note: '', edited_think_block: '\n\t ' }],
    });
    expect(result.ok).toBe(false);
  });

  it('validates revisions regardless of the action', () => {
    const result = validateDecision({
      action: 'accept',
      revisions: [{ correction_type: 'nope', note: '', edited_think_block: 'x' }],
    });
    expect(result.ok).toBe(false);
  });
});
