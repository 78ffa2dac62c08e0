// DOM rendering: queue list screen and trace detail screen.

import { ApiClient } from './api.js';
import { diffLines, diffStats } from './diff.js';
import { ReviewSession, SessionSnapshot } from './session.js';
import { CORRECTION_TYPES, CorrectionType, QueueEntry, TraceDetail } from './types.js';

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) {
    if (k === 'class') node.className = v;
    else node.setAttribute(k, v);
  }
  node.append(...children);
  return node;
}

export class ReviewApp {
  private root: HTMLElement;

  constructor(
    root: HTMLElement,
    private session: ReviewSession,
    private api: ApiClient,
  ) {
    this.root = root;
  }

  async start(): Promise<void> {
    await this.session.loadQueue();
    const snap = this.session.snapshot();
    if (snap.queue.length > 0) {
      await this.session.openTrace(snap.queue[0].trace_id);
    }
    this.render();
  }

  render(): void {
    const snap = this.session.snapshot();
    this.root.replaceChildren();
    if (snap.banner) {
      const banner = el('div', { class: `banner banner-${snap.submission}` }, snap.banner);
      const retry = el('button', { class: 'retry' }, 'Retry');
      retry.onclick = () => void this.retry();
      banner.append(retry);
      this.root.append(banner);
    }
    this.root.append(this.queuePane(snap));
    if (snap.current) {
      this.root.append(this.detailPane(snap.current));
    } else {
      this.root.append(el('section', { class: 'empty' }, 'Queue clear: nothing pending.'));
    }
  }

  private async retry(): Promise<void> {
    await this.session.loadQueue();
    const snap = this.session.snapshot();
    if (!snap.current && snap.queue.length > 0) {
      await this.session.openTrace(snap.queue[0].trace_id);
    }
    this.render();
  }

  private queuePane(snap: SessionSnapshot): HTMLElement {
    const rows = snap.queue.map((entry: QueueEntry) => {
      const row = el(
        'li',
        { class: entry.trace_id === snap.current?.trace_id ? 'queue-row active' : 'queue-row' },
        el('span', { class: 'trace-id' }, entry.trace_id),
        el('span', { class: 'attempts' }, `${entry.attempts_used} attempts`),
        el('span', { class: 'created' }, entry.created_at),
      );
      row.onclick = () => {
        void this.session.openTrace(entry.trace_id).then(() => this.render());
      };
      return row;
    });
    return el(
      'aside',
      { class: 'queue' },
      el('h2', {}, `Pending (${snap.queueTotal})`),
      el('ul', {}, ...rows),
      el('p', { class: 'decided' }, `decided this session: ${snap.decidedCount}`),
    );
  }

  private detailPane(trace: TraceDetail): HTMLElement {
    const pane = el('main', { class: 'detail' });
    pane.append(
      el(
        'header',
        {},
        el('h2', {}, trace.trace_id),
        el('span', { class: `status status-${trace.status}` }, trace.status),
        el('span', { class: 'answer' }, `answer: ${trace.answer}`),
      ),
    );
    pane.append(this.mediaSection(trace));
    pane.append(this.cueSection(trace));
    pane.append(
      el(
        'section',
        { class: 'think' },
        el('h3', {}, 'Reasoning trace'),
        el('pre', {}, trace.active_think_block),
      ),
    );
    pane.append(this.editorSection(trace));
    pane.append(this.decisionBar(trace));
    return pane;
  }

  private mediaSection(trace: TraceDetail): HTMLElement {
    const section = el('section', { class: 'media' }, el('h3', {}, 'Evidence'));
    if (trace.media.query_audio) {
      const audio = el('audio', { controls: '', preload: 'metadata' });
      audio.src = this.api.mediaUrl(trace.media.query_audio);
      section.append(el('div', { class: 'player' }, 'Query audio: ', audio));
    }
    if (trace.media.query_video) {
      const frame = el('img', { class: 'last-frame', alt: 'last frame' });
      frame.src = this.api.mediaUrl(trace.media.query_video);
      section.append(el('div', { class: 'frame' }, frame));
    }
    const gallery = el('div', { class: 'reference-gallery' });
    for (const ref of trace.media.references ?? []) {
      const card = el('figure', { class: 'reference' }, el('figcaption', {}, ref.participant));
      if (ref.portrait) {
        const img = el('img', { alt: `${ref.participant} portrait` });
        img.src = this.api.mediaUrl(ref.portrait);
        card.append(img);
      }
      if (ref.voice) {
        const audio = el('audio', { controls: '', preload: 'none' });
        audio.src = this.api.mediaUrl(ref.voice);
        card.append(audio);
      }
      gallery.append(card);
    }
    section.append(gallery);
    return section;
  }

  private cueSection(trace: TraceDetail): HTMLElement {
    const section = el(
      'section',
      { class: 'cues' },
      el('h3', {}, 'Attributed cues'),
      el('pre', { class: 'cue-block' }, trace.cue_block),
    );
    if (trace.attribution.length > 0) {
      const header = el('tr', {}, el('th', {}, 'kind'), el('th', {}, '#'), el('th', {}, 'chosen'), el('th', {}, 'score vector'));
      const rows = trace.attribution.map((row) =>
        el(
          'tr',
          {},
          el('td', {}, row.kind),
          el('td', {}, String(row.index)),
          el('td', {}, row.chosen),
          el('td', { class: 'scores' }, row.scores.map((s) => s.toFixed(3)).join('  ')),
        ),
      );
      section.append(el('table', { class: 'score-table' }, header, ...rows));
    }
    return section;
  }

  private editorSection(trace: TraceDetail): HTMLElement {
    const draft = this.session.draftFor(trace.trace_id);
    const section = el('section', { class: 'editor' }, el('h3', {}, 'Revise think block'));

    const selector = el('select', { class: 'correction-type' });
    selector.append(el('option', { value: '' }, 'correction type...'));
    for (const { value, label } of CORRECTION_TYPES) {
      const opt = el('option', { value }, label);
      if (draft.correction_type === value) opt.selected = true;
      selector.append(opt);
    }
    selector.onchange = () => {
      this.session.updateDraft({ correction_type: selector.value as CorrectionType | '' });
      this.render();
    };

    const note = el('input', { class: 'note', placeholder: 'note (optional)', value: draft.note });
    note.oninput = () => this.session.updateDraft({ note: note.value });

    const editor = el('textarea', { class: 'think-editor', rows: '8' });
    editor.value = draft.edited_think_block;
    editor.oninput = () => {
      this.session.updateDraft({ edited_think_block: editor.value });
      this.renderDiff(trace, diffHost);
    };

    const diffHost = el('div', { class: 'diff' });
    this.renderDiff(trace, diffHost);

    section.append(selector, note, editor, el('h4', {}, 'Diff against original'), diffHost);
    return section;
  }

  private renderDiff(trace: TraceDetail, host: HTMLElement): void {
    const draft = this.session.draftFor(trace.trace_id);
    const lines = diffLines(trace.think_block, draft.edited_think_block);
    const stats = diffStats(lines);
    host.replaceChildren(
      el('p', { class: 'diff-stats' }, `+${stats.inserted} / -${stats.deleted} lines`),
      ...lines.map((line) => el('div', { class: `diff-line diff-${line.op}` }, line.text)),
    );
  }

  private decisionBar(trace: TraceDetail): HTMLElement {
    const bar = el('section', { class: 'decisions' });
    const accept = el('button', { class: 'accept', title: 'shortcut: a' }, 'Accept');
    const discard = el('button', { class: 'discard', title: 'shortcut: d' }, 'Discard');
    const revise = el('button', { class: 'revise', title: 'shortcut: r' }, 'Submit revision');
    const pending = trace.status === 'pending';
    accept.disabled = !pending;
    discard.disabled = !pending;
    revise.disabled = !pending || !this.session.canSubmitRevise();
    accept.onclick = () => void this.session.accept().then(() => this.render());
    discard.onclick = () => void this.session.discard().then(() => this.render());
    revise.onclick = () => void this.session.revise().then(() => this.render());
    bar.append(accept, discard, revise);
    return bar;
  }
}
