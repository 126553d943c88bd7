import { describe, expect, it } from 'vitest';

import { SseParser } from '../src/client.js';
import { ConsoleStore, formatAge, toGrantViews, toPendingView } from '../src/store.js';
import type { GrantsListingWire, PendingRequestWire } from '../src/types.js';

const NOW = 1_700_000_120_000; // ms

function wireRequest(overrides: Partial<PendingRequestWire> = {}): PendingRequestWire {
  return {
    request_id: 'req-0001',
    session_id: 'sess-0001',
    plan_id: 'plan-0001',
    user: 'alice',
    prompt: 'sync the calendar',
    status: 'PENDING',
    verdict: null,
    created_at: NOW / 1000 - 90,
    expires_at: NOW / 1000 + 510,
    delta: {
      calendar: {
        nodes: ['calendar.events.readonly'],
        descriptions: { 'calendar.events.readonly': 'Read-only access to events' },
        method_counts: { 'calendar.events.readonly': 4 },
      },
    },
    ...overrides,
  };
}

describe('formatAge', () => {
  it('scales through seconds, minutes, hours', () => {
    expect(formatAge(NOW / 1000 - 5, NOW)).toBe('5s ago');
    expect(formatAge(NOW / 1000 - 90, NOW)).toBe('1m ago');
    expect(formatAge(NOW / 1000 - 7200, NOW)).toBe('2h ago');
    expect(formatAge(NOW / 1000 + 10, NOW)).toBe('0s ago');
  });
});

describe('toPendingView', () => {
  it('copies the card fields', () => {
    const view = toPendingView(wireRequest(), NOW);
    expect(view.requestId).toBe('req-0001');
    expect(view.user).toBe('alice');
    expect(view.planSummary).toBe('sync the calendar');
    expect(view.ageText).toBe('1m ago');
    expect(view.apps).toEqual(['calendar']);
    expect(view.deltaSize).toBe(1);
    expect(view.asks).toEqual([
      {
        app: 'calendar',
        node: 'calendar.events.readonly',
        description: 'Read-only access to events',
        methodCount: 4,
      },
    ]);
  });

  it('falls back to the plan id when the prompt is empty', () => {
    const view = toPendingView(wireRequest({ prompt: '' }), NOW);
    expect(view.planSummary).toBe('plan plan-0001');
  });

  it('never copies fields it does not render', () => {
    // a hostile or future gateway payload with extra keys must not leak
    const wire = wireRequest() as PendingRequestWire & Record<string, unknown>;
    wire['credential'] = 'sk-secret-CANARY';
    wire['session_token'] = 'tok-123';
    const view = toPendingView(wire, NOW);
    expect(Object.keys(view).sort()).toEqual([
      'ageText',
      'apps',
      'asks',
      'createdAt',
      'deltaSize',
      'planId',
      'planSummary',
      'requestId',
      'user',
    ]);
    expect(JSON.stringify(view)).not.toContain('CANARY');
    expect(JSON.stringify(view)).not.toContain('tok-123');
  });
});

describe('ConsoleStore', () => {
  it('orders pending cards newest first', () => {
    const store = new ConsoleStore();
    store.applySnapshot([
      wireRequest({ request_id: 'req-0001', created_at: NOW / 1000 - 300 }),
      wireRequest({ request_id: 'req-0002', created_at: NOW / 1000 - 10 }),
      wireRequest({ request_id: 'req-0003', created_at: NOW / 1000 - 100 }),
    ]);
    const ids = store.pendingViews(NOW).map((v) => v.requestId);
    expect(ids).toEqual(['req-0002', 'req-0003', 'req-0001']);
  });

  it('starts empty and snapshots replace state', () => {
    const store = new ConsoleStore();
    expect(store.pendingViews(NOW)).toEqual([]);
    store.applySnapshot([wireRequest()]);
    store.applyEvent({ event: 'snapshot', requests: [] }, NOW);
    expect(store.pendingCount()).toBe(0);
  });

  it('request events add cards, decided events move them to history', () => {
    const store = new ConsoleStore();
    store.applyEvent({ event: 'request', request: wireRequest() }, NOW);
    expect(store.pendingCount()).toBe(1);

    store.applyEvent({ event: 'decided', request_id: 'req-0001', verdict: 'ONCE' }, NOW);
    expect(store.pendingCount()).toBe(0);
    const history = store.decidedHistory();
    expect(history).toHaveLength(1);
    expect(history[0]?.verdict).toBe('ONCE');
    expect(history[0]?.view?.planSummary).toBe('sync the calendar');
  });

  it('a decision from elsewhere removes a card it never saw the body of', () => {
    const store = new ConsoleStore();
    store.applyEvent({ event: 'decided', request_id: 'req-0404', verdict: 'DENY' }, NOW);
    expect(store.pendingCount()).toBe(0);
    expect(store.decidedHistory()[0]?.view).toBeNull();
  });
});

describe('toGrantViews', () => {
  const listing: GrantsListingWire = {
    persistent: {
      alice: { calendar: ['calendar.events.readonly'], mail: ['mail.readonly'] },
      bob: {},
    },
    sessions: {
      'sess-0002': {
        user: 'bob',
        live: true,
        grants: [{ app: 'calendar', node: 'calendar.events', duration: 'ONCE', consumed: true }],
      },
    },
  };

  it('mirrors the listing exactly, persistent rows first', () => {
    const rows = toGrantViews(listing);
    expect(rows).toHaveLength(3);
    expect(rows[0]).toMatchObject({
      scope: 'persistent',
      user: 'alice',
      app: 'calendar',
      node: 'calendar.events.readonly',
      duration: 'ALWAYS',
    });
    expect(rows[2]).toMatchObject({
      scope: 'session',
      user: 'bob',
      sessionId: 'sess-0002',
      duration: 'ONCE',
      consumed: true,
      live: true,
    });
  });

  it('empty listing yields no rows', () => {
    expect(toGrantViews({ persistent: {}, sessions: {} })).toEqual([]);
  });
});

describe('SseParser', () => {
  it('reassembles events across chunk boundaries and skips keepalives', () => {
    const parser = new SseParser();
    const first = parser.push('event: snapshot\ndata: {"event":"snapshot","requ');
    expect(first).toEqual([]);
    const second = parser.push('ests":[]}\n\n: keepalive\n\nevent: decided\n');
    expect(second).toEqual([{ event: 'snapshot', requests: [] }]);
    const third = parser.push('data: {"event":"decided","request_id":"req-0001"}\n\n');
    expect(third).toEqual([{ event: 'decided', request_id: 'req-0001' }]);
  });

  it('drops malformed data blocks instead of throwing', () => {
    const parser = new SseParser();
    expect(parser.push('data: {broken\n\n')).toEqual([]);
  });
});
