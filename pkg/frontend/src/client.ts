/**
 * Typed client for the gateway's operator endpoints.
 *
 * All reads and writes go through fetch with the operator token header.
 * Live updates come from the server-sent event stream; when the stream
 * drops, the subscription falls back to polling the request list until
 * the stream reconnects, so a flaky connection degrades instead of
 * freezing the queue.
 */

import type {
  ConnectionState,
  GrantsListingWire,
  LogRecordWire,
  PendingRequestWire,
  StreamEvent,
  VerdictName,
} from './types.js';

const OPERATOR_HEADER = 'X-Operator-Token';

export type DecideOutcome =
  | { outcome: 'applied'; planStatus: string }
  | { outcome: 'conflict'; message: string }
  | { outcome: 'gone'; message: string };

export interface SubscriptionHandle {
  close(): void;
}

export interface SubscriberCallbacks {
  onEvent(event: StreamEvent): void;
  onState?(state: ConnectionState): void;
}

/** Incremental parser for a text/event-stream body. */
export class SseParser {
  private buffer = '';

  /** Feed one chunk; returns every complete event it closed off. */
  push(chunk: string): StreamEvent[] {
    this.buffer += chunk;
    const events: StreamEvent[] = [];
    let split: number;
    while ((split = this.buffer.indexOf('\n\n')) >= 0) {
      const block = this.buffer.slice(0, split);
      this.buffer = this.buffer.slice(split + 2);
      const event = parseBlock(block);
      if (event) events.push(event);
    }
    return events;
  }
}

function parseBlock(block: string): StreamEvent | null {
  let data = '';
  for (const line of block.split('\n')) {
    if (line.startsWith(':')) continue; // keepalive comment
    if (line.startsWith('data:')) data += line.slice(5).trim();
  }
  if (!data) return null;
  try {
    return JSON.parse(data) as StreamEvent;
  } catch {
    return null;
  }
}

export class GatewayClient {
  constructor(
    private readonly baseUrl: string,
    private readonly operatorToken: string,
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const headers = new Headers(init.headers);
    headers.set(OPERATOR_HEADER, this.operatorToken);
    if (init.body) headers.set('content-type', 'application/json');
    return this.fetchImpl(`${this.baseUrl}${path}`, { ...init, headers });
  }

  private async json<T>(path: string, init: RequestInit = {}): Promise<T> {
    const response = await this.request(path, init);
    if (!response.ok) {
      const body = await response.text();
      throw new Error(`${path} -> ${response.status}: ${body}`);
    }
    return (await response.json()) as T;
  }

  async health(): Promise<{ ok: boolean; apps: string[] }> {
    return this.json('/v1/health');
  }

  async pendingRequests(): Promise<PendingRequestWire[]> {
    const body = await this.json<{ requests: PendingRequestWire[] }>('/v1/requests');
    return body.requests;
  }

  /**
   * Apply one verdict. An already-decided request comes back as a
   * conflict outcome rather than an exception: losing a race to another
   * operator window is an expected, non-destructive result.
   */
  async decide(requestId: string, verdict: VerdictName): Promise<DecideOutcome> {
    const response = await this.request(`/v1/request/${requestId}`, {
      method: 'POST',
      body: JSON.stringify({ verdict }),
    });
    const body = (await response.json()) as Record<string, unknown>;
    if (response.ok) {
      return { outcome: 'applied', planStatus: String(body.plan_status ?? '') };
    }
    if (response.status === 409) {
      return { outcome: 'conflict', message: String(body.message ?? 'already decided') };
    }
    if (response.status === 404) {
      return { outcome: 'gone', message: String(body.message ?? 'request expired') };
    }
    throw new Error(`decide ${requestId} -> ${response.status}: ${JSON.stringify(body)}`);
  }

  async grants(): Promise<GrantsListingWire> {
    const body = await this.json<{ grants: GrantsListingWire }>('/v1/grants');
    return body.grants;
  }

  async revoke(user: string, app: string, node: string, now: boolean): Promise<void> {
    await this.json('/v1/grants/revoke', {
      method: 'POST',
      body: JSON.stringify({ user, app, node, now }),
    });
  }

  async log(afterSeq = 0): Promise<LogRecordWire[]> {
    const body = await this.json<{ records: LogRecordWire[] }>(`/v1/log?after_seq=${afterSeq}`);
    return body.records;
  }

  /**
   * Follow the pending queue. Emits stream events as they arrive; on
   * stream failure reports 'polling', serves poll results as synthetic
   * snapshots, and keeps retrying the stream until close() is called.
   */
  subscribePending(callbacks: SubscriberCallbacks, retryMs = 1000): SubscriptionHandle {
    let closed = false;
    let abort = new AbortController();

    const setState = (state: ConnectionState) => callbacks.onState?.(state);

    const pollOnce = async () => {
      try {
        const requests = await this.pendingRequests();
        if (!closed) {
          setState('polling');
          callbacks.onEvent({ event: 'snapshot', requests });
        }
      } catch {
        if (!closed) setState('disconnected');
      }
    };

    const loop = async () => {
      while (!closed) {
        setState('connecting');
        abort = new AbortController();
        try {
          const response = await this.fetchImpl(`${this.baseUrl}/v1/requests/stream`, {
            headers: { [OPERATOR_HEADER]: this.operatorToken },
            signal: abort.signal,
          });
          if (!response.ok || !response.body) throw new Error(`stream ${response.status}`);
          setState('live');
          const reader = response.body.getReader();
          const decoder = new TextDecoder();
          const parser = new SseParser();
          for (;;) {
            const { done, value } = await reader.read();
            if (done) break;
            for (const event of parser.push(decoder.decode(value, { stream: true }))) {
              if (!closed) callbacks.onEvent(event);
            }
          }
        } catch {
          // fall through to poll-and-retry
        }
        if (closed) return;
        await pollOnce();
        await new Promise((resolve) => setTimeout(resolve, retryMs));
      }
    };

    void loop();
    return {
      close() {
        closed = true;
        abort.abort();
      },
    };
  }
}
