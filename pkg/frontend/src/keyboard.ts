// Keyboard-first decisions: a=accept, d=discard, r=submit revision,
// j/k=next/previous pending trace. Disabled while typing in form fields.

import { ReviewSession } from './session.js';

export type RenderFn = () => void;

export function isEditableTarget(target: EventTarget | null): boolean {
  if (!(target instanceof HTMLElement)) return false;
  return (
    target.tagName === 'TEXTAREA' ||
    target.tagName === 'INPUT' ||
    target.tagName === 'SELECT' ||
    target.isContentEditable
  );
}

export function bindShortcuts(session: ReviewSession, render: RenderFn): (ev: KeyboardEvent) => void {
  const handler = (ev: KeyboardEvent): void => {
    if (isEditableTarget(ev.target) || ev.ctrlKey || ev.metaKey || ev.altKey) return;
    const snap = session.snapshot();
    switch (ev.key) {
      case 'a':
        void session.accept().then(render);
        break;
      case 'd':
        void session.discard().then(render);
        break;
      case 'r':
        void session.revise().then(render);
        break;
      case 'j':
      case 'k': {
        const ids = snap.queue.map((e) => e.trace_id);
        if (ids.length === 0) return;
        const at = snap.current ? ids.indexOf(snap.current.trace_id) : -1;
        const next = ev.key === 'j' ? Math.min(at + 1, ids.length - 1) : Math.max(at - 1, 0);
        void session.openTrace(ids[next]).then(render);
        break;
      }
      default:
        return;
    }
    ev.preventDefault();
  };
  return handler;
}
