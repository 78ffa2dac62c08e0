// Line diff between the original and edited think block, so reviewers can
// see exactly how far a revision strays from the generated trace.

export type DiffOp = 'equal' | 'insert' | 'delete';

export interface DiffLine {
  op: DiffOp;
  text: string;
}

export function diffLines(original: string, edited: string): DiffLine[] {
  const a = original.split('\n');
  const b = edited.split('\n');
  const n = a.length;
  const m = b.length;
  // LCS table
  const lcs: number[][] = Array.from({ length: n + 1 }, () => new Array(m + 1).fill(0));
  for (let i = n - 1; i >= 0; i--) {
    for (let j = m - 1; j >= 0; j--) {
      lcs[i][j] = a[i] === b[j] ? lcs[i + 1][j + 1] + 1 : Math.max(lcs[i + 1][j], lcs[i][j + 1]);
    }
  }
  const out: DiffLine[] = [];
  let i = 0;
  let j = 0;
  while (i < n && j < m) {
    if (a[i] === b[j]) {
      out.push({ op: 'equal', text: a[i] });
      i++;
      j++;
    } else if (lcs[i + 1][j] >= lcs[i][j + 1]) {
      out.push({ op: 'delete', text: a[i] });
      i++;
    } else {
      out.push({ op: 'insert', text: b[j] });
      j++;
    }
  }
  while (i < n) out.push({ op: 'delete', text: a[i++] });
  while (j < m) out.push({ op: 'insert', text: b[j++] });
  return out;
}

export interface DiffStats {
  inserted: number;
  deleted: number;
  unchanged: number;
}

export function diffStats(lines: DiffLine[]): DiffStats {
  const stats = { inserted: 0, deleted: 0, unchanged: 0 };
  for (const line of lines) {
    if (line.op === 'insert') stats.inserted++;
    else if (line.op === 'delete') stats.deleted++;
    else stats.unchanged++;
  }
  return stats;
}
