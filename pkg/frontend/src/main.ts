// Entry point: base URL comes from ?service= or defaults to same origin.

import { ApiClient } from './api.js';
import { bindShortcuts } from './keyboard.js';
import { ReviewSession } from './session.js';
import { ReviewApp } from './ui.js';

function serviceBaseUrl(): string {
  const params = new URLSearchParams(window.location.search);
  return params.get('service') ?? window.location.origin;
}

async function boot(): Promise<void> {
  const api = new ApiClient({ baseUrl: serviceBaseUrl() });
  const session = new ReviewSession(api);
  const root = document.getElementById('app');
  if (!root) throw new Error('missing #app element');
  const app = new ReviewApp(root, session, api);
  document.addEventListener('keydown', bindShortcuts(session, () => app.render()));
  await app.start();
}

void boot();
