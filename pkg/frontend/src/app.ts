/**
 * Browser entry point: wires the gateway client and the view-model store
 * to the DOM. Rendering is a full repaint of three lists (pending cards,
 * standing grants, recent decisions); at operator scale that is cheaper
 * than correctness bugs from incremental patching.
 *
 * No optimistic state: a card only moves when the gateway says so via
 * the event stream, so two open console windows can never disagree.
 */

import { GatewayClient } from './client.js';
import { ConsoleStore, toGrantViews } from './store.js';
import type { ConnectionState, ConsoleConfig, GrantView, VerdictName } from './types.js';
import { VERDICTS } from './types.js';

const REFRESH_GRANTS_MS = 5000;

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function byId(id: string): HTMLElement {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id} in console markup`);
  return node;
}

async function loadConfig(): Promise<ConsoleConfig> {
  const response = await fetch('/config.json');
  if (!response.ok) throw new Error('console host did not serve /config.json');
  return (await response.json()) as ConsoleConfig;
}

function stateBanner(state: ConnectionState): { text: string; cls: string } {
  switch (state) {
    case 'live':
      return { text: 'live: event stream connected', cls: 'banner live' };
    case 'polling':
      return { text: 'degraded: stream lost, polling for requests', cls: 'banner polling' };
    case 'disconnected':
      return { text: 'disconnected: gateway unreachable, retrying', cls: 'banner down' };
    default:
      return { text: 'connecting to gateway', cls: 'banner' };
  }
}

async function main(): Promise<void> {
  const config = await loadConfig();
  const client = new GatewayClient(config.gatewayUrl, config.operatorToken);
  const store = new ConsoleStore();

  const banner = byId('banner');
  const pendingRoot = byId('pending');
  const grantsRoot = byId('grants');
  const historyRoot = byId('history');
  const noticeRoot = byId('notice');

  let grantRows: GrantView[] = [];

  const notice = (text: string) => {
    noticeRoot.textContent = text;
    noticeRoot.classList.toggle('hidden', text === '');
  };

  const decide = async (requestId: string, verdict: VerdictName) => {
    try {
      const result = await client.decide(requestId, verdict);
      if (result.outcome === 'applied') notice('');
      else notice(`request ${requestId}: ${result.message}`);
    } catch (err) {
      notice(`decision failed, nothing recorded: ${String(err)}`);
    }
    await refreshGrants();
  };

  const revoke = async (row: GrantView, now: boolean) => {
    try {
      await client.revoke(row.user, row.app, row.node, now);
      notice('');
    } catch (err) {
      notice(`revoke failed: ${String(err)}`);
    }
    await refreshGrants();
  };

  const renderPending = () => {
    const views = store.pendingViews(Date.now());
    pendingRoot.replaceChildren();
    if (views.length === 0) {
      pendingRoot.append(el('p', 'empty', 'No pending permission requests.'));
      return;
    }
    for (const view of views) {
      const card = el('div', 'card');
      const head = el('div', 'card-head');
      head.append(
        el('span', 'user', view.user),
        el('span', 'plan', view.planSummary),
        el('span', 'age', view.ageText),
      );
      card.append(head);

      const asks = el('ul', 'asks');
      for (const ask of view.asks) {
        const item = el('li');
        item.append(
          el('span', 'app', ask.app),
          el('span', 'desc', ask.description),
          el('span', 'count', `${ask.methodCount} methods`),
        );
        asks.append(item);
      }
      card.append(asks);

      const buttons = el('div', 'verdicts');
      for (const { verdict, label } of VERDICTS) {
        const button = el('button', `verdict ${verdict.toLowerCase()}`, label);
        button.addEventListener('click', () => void decide(view.requestId, verdict));
        buttons.append(button);
      }
      card.append(buttons);
      pendingRoot.append(card);
    }
  };

  const renderGrants = () => {
    grantsRoot.replaceChildren();
    if (grantRows.length === 0) {
      grantsRoot.append(el('p', 'empty', 'No standing grants.'));
      return;
    }
    for (const row of grantRows) {
      const line = el('div', 'grant');
      line.append(
        el('span', `badge ${row.duration.toLowerCase()}`, row.duration),
        el('span', 'user', row.user),
        el('span', 'node', `${row.app} / ${row.node}`),
      );
      if (row.scope === 'session') {
        const status = row.consumed ? 'consumed' : row.live ? 'live session' : 'ended';
        line.append(el('span', 'session', `${row.sessionId ?? ''} (${status})`));
      } else {
        const revokeBtn = el('button', 'revoke', 'Revoke');
        revokeBtn.addEventListener('click', () => void revoke(row, false));
        const nowBtn = el('button', 'revoke now', 'Revoke now');
        nowBtn.addEventListener('click', () => void revoke(row, true));
        line.append(revokeBtn, nowBtn);
      }
      grantsRoot.append(line);
    }
  };

  const renderHistory = () => {
    historyRoot.replaceChildren();
    for (const entry of store.decidedHistory()) {
      const line = el('div', `decided ${entry.verdict.toLowerCase()}`);
      line.append(
        el('span', 'verdict', entry.verdict),
        el('span', 'plan', entry.view ? entry.view.planSummary : entry.requestId),
      );
      historyRoot.append(line);
    }
  };

  const refreshGrants = async () => {
    try {
      grantRows = toGrantViews(await client.grants());
      renderGrants();
    } catch {
      // banner already reports connectivity; keep the last good list
    }
  };

  client.subscribePending({
    onEvent: (event) => {
      store.applyEvent(event, Date.now());
      renderPending();
      renderHistory();
      if (event.event === 'decided') void refreshGrants();
    },
    onState: (state) => {
      const { text, cls } = stateBanner(state);
      banner.textContent = text;
      banner.className = cls;
    },
  });

  await refreshGrants();
  setInterval(() => void refreshGrants(), REFRESH_GRANTS_MS);
  setInterval(renderPending, 1000); // keep the age text moving
}

void main().catch((err) => {
  byId('banner').textContent = `console failed to start: ${String(err)}`;
});
