/**
 * Console view-model. Pure state: stream events go in, render-ready view
 * lists come out. Holding this apart from the DOM keeps every invariant
 * testable without a browser, and guarantees the console never shows
 * anything it did not explicitly copy from a gateway payload.
 */

import type {
  DecidedEntry,
  GrantsListingWire,
  GrantView,
  PendingRequestView,
  PendingRequestWire,
  StreamEvent,
} from './types.js';

const HISTORY_LIMIT = 50;

export function formatAge(createdAtSec: number, nowMs: number): string {
  const seconds = Math.max(0, Math.floor(nowMs / 1000 - createdAtSec));
  if (seconds < 60) return `${seconds}s ago`;
  if (seconds < 3600) return `${Math.floor(seconds / 60)}m ago`;
  return `${Math.floor(seconds / 3600)}h ago`;
}

/** Copy exactly the card fields out of a wire request, nothing else. */
export function toPendingView(wire: PendingRequestWire, nowMs: number): PendingRequestView {
  const asks: PendingRequestView['asks'] = [];
  for (const app of Object.keys(wire.delta).sort()) {
    const body = wire.delta[app];
    if (!body) continue;
    for (const node of body.nodes) {
      asks.push({
        app,
        node,
        description: body.descriptions[node] ?? node,
        methodCount: body.method_counts[node] ?? 0,
      });
    }
  }
  return {
    requestId: wire.request_id,
    planId: wire.plan_id,
    user: wire.user,
    planSummary: wire.prompt || `plan ${wire.plan_id}`,
    createdAt: wire.created_at,
    ageText: formatAge(wire.created_at, nowMs),
    apps: Object.keys(wire.delta).sort(),
    deltaSize: asks.length,
    asks,
  };
}

export class ConsoleStore {
  private pending = new Map<string, PendingRequestWire>();
  private history: DecidedEntry[] = [];

  /** Replace the queue with a full snapshot (stream start or poll). */
  applySnapshot(requests: PendingRequestWire[]): void {
    this.pending = new Map(requests.map((r) => [r.request_id, r]));
  }

  applyEvent(event: StreamEvent, nowMs: number): void {
    if (event.event === 'snapshot' && event.requests) {
      this.applySnapshot(event.requests);
      return;
    }
    if (event.event === 'request' && event.request) {
      this.pending.set(event.request.request_id, event.request);
      return;
    }
    if (event.event === 'decided' && event.request_id) {
      const wire = this.pending.get(event.request_id);
      this.pending.delete(event.request_id);
      this.history.unshift({
        requestId: event.request_id,
        verdict: event.verdict ?? 'UNKNOWN',
        decidedAt: nowMs,
        view: wire ? toPendingView(wire, nowMs) : null,
      });
      if (this.history.length > HISTORY_LIMIT) this.history.pop();
    }
  }

  /** Pending cards, newest first. */
  pendingViews(nowMs: number): PendingRequestView[] {
    return [...this.pending.values()]
      .sort((a, b) => b.created_at - a.created_at || b.request_id.localeCompare(a.request_id))
      .map((wire) => toPendingView(wire, nowMs));
  }

  decidedHistory(): DecidedEntry[] {
    return [...this.history];
  }

  pendingCount(): number {
    return this.pending.size;
  }
}

/** Flatten the grants listing into settings-style rows. */
export function toGrantViews(listing: GrantsListingWire): GrantView[] {
  const rows: GrantView[] = [];
  for (const user of Object.keys(listing.persistent).sort()) {
    const apps = listing.persistent[user];
    if (!apps) continue;
    for (const app of Object.keys(apps).sort()) {
      for (const node of apps[app] ?? []) {
        rows.push({
          scope: 'persistent',
          user,
          app,
          node,
          duration: 'ALWAYS',
          sessionId: null,
          live: true,
          consumed: false,
        });
      }
    }
  }
  for (const sessionId of Object.keys(listing.sessions).sort()) {
    const session = listing.sessions[sessionId];
    if (!session) continue;
    for (const grant of session.grants) {
      rows.push({
        scope: 'session',
        user: session.user,
        app: grant.app,
        node: grant.node,
        duration: grant.duration === 'ONCE' ? 'ONCE' : 'SESSION',
        sessionId,
        live: session.live,
        consumed: Boolean(grant.consumed),
      });
    }
  }
  return rows;
}
