// Thin fetch wrapper over the review-service HTTP API.

import { DecisionRequest, QueuePage, TraceDetail, TraceStatus } from './types.js';

export class ApiError extends Error {
  constructor(
    public status: number,
    public body: unknown,
  ) {
    super(`service responded ${status}`);
  }
}

export class NetworkError extends Error {
  constructor(public cause_: unknown) {
    super('network failure');
  }
}

export interface ApiClientOptions {
  baseUrl: string;
  fetchImpl?: typeof fetch;
}

export class ApiClient {
  private baseUrl: string;
  private fetchImpl: typeof fetch;

  constructor(options: ApiClientOptions) {
    this.baseUrl = options.baseUrl.replace(/\/+$/, '');
    this.fetchImpl = options.fetchImpl ?? fetch;
  }

  mediaUrl(link: string): string {
    return `${this.baseUrl}${link}`;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new NetworkError(err);
    }
    let body: unknown = null;
    const text = await response.text();
    if (text) {
      try {
        body = JSON.parse(text);
      } catch {
        body = text;
      }
    }
    if (!response.ok) {
      throw new ApiError(response.status, body);
    }
    return body as T;
  }

  async health(): Promise<boolean> {
    try {
      await this.request<{ status: string }>('/healthz');
      return true;
    } catch {
      return false;
    }
  }

  getQueue(status?: TraceStatus, limit = 50, offset = 0): Promise<QueuePage> {
    const params = new URLSearchParams({ limit: String(limit), offset: String(offset) });
    if (status) params.set('status', status);
    return this.request<QueuePage>(`/queue?${params.toString()}`);
  }

  getTrace(traceId: string): Promise<TraceDetail> {
    return this.request<TraceDetail>(`/trace/${encodeURIComponent(traceId)}`);
  }

  postDecision(traceId: string, body: DecisionRequest): Promise<TraceDetail> {
    return this.request<TraceDetail>(`/trace/${encodeURIComponent(traceId)}/decision`, {
      method: 'POST',
      headers: { 'Content-Type': 'application/json' },
      body: JSON.stringify(body),
    });
  }
}
