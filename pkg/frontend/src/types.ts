/**
 * Wire shapes from the gateway HTTP API, plus the view types the console
 * renders. Views carry only display fields copied off the wire payloads;
 * nothing else from a response ever reaches the DOM.
 */

export type VerdictName = 'ALWAYS' | 'SESSION' | 'ONCE' | 'DENY';

export const VERDICTS: { verdict: VerdictName; label: string }[] = [
  { verdict: 'ALWAYS', label: 'Always allow' },
  { verdict: 'SESSION', label: 'Allow this session' },
  { verdict: 'ONCE', label: 'Allow once' },
  { verdict: 'DENY', label: "Don't allow" },
];

/** One app's slice of a pending request's additional-permission ask. */
export interface DeltaBody {
  nodes: string[];
  descriptions: Record<string, string>;
  method_counts: Record<string, number>;
}

/** Pending permission request as served by GET /v1/requests. */
export interface PendingRequestWire {
  request_id: string;
  session_id: string;
  plan_id: string;
  user: string;
  prompt: string;
  status: string;
  verdict: string | null;
  created_at: number;
  expires_at: number;
  delta: Record<string, DeltaBody>;
}

export interface StreamEvent {
  event: 'snapshot' | 'request' | 'decided';
  requests?: PendingRequestWire[];
  request?: PendingRequestWire;
  request_id?: string;
  verdict?: string;
}

export interface GrantsListingWire {
  persistent: Record<string, Record<string, string[]>>;
  sessions: Record<
    string,
    {
      user: string;
      live: boolean;
      grants: { app: string; node: string; duration: string; consumed?: boolean }[];
    }
  >;
}

export interface LogRecordWire {
  seq: number;
  type: string;
  [key: string]: unknown;
}

/** What a pending card shows. */
export interface PendingRequestView {
  requestId: string;
  planId: string;
  user: string;
  planSummary: string;
  createdAt: number;
  ageText: string;
  apps: string[];
  deltaSize: number;
  asks: { app: string; node: string; description: string; methodCount: number }[];
}

/** One row in the standing-grant settings table. */
export interface GrantView {
  scope: 'persistent' | 'session';
  user: string;
  app: string;
  node: string;
  duration: 'ALWAYS' | 'SESSION' | 'ONCE';
  sessionId: string | null;
  live: boolean;
  consumed: boolean;
}

export interface DecidedEntry {
  requestId: string;
  verdict: string;
  decidedAt: number;
  view: PendingRequestView | null;
}

export type ConnectionState = 'connecting' | 'live' | 'polling' | 'disconnected';

export interface ConsoleConfig {
  gatewayUrl: string;
  operatorToken: string;
}
