/**
 * Static host for the console page.
 *
 * Serves the markup, the compiled modules, and /config.json carrying the
 * gateway URL and the local operator token. The browser talks to the
 * gateway directly; this process never proxies or stores any state.
 *
 * Environment variables:
 *   PORT            console port (default 8788)
 *   GATEWAY_URL     gateway base URL (default http://127.0.0.1:8787)
 *   OPERATOR_TOKEN  operator token the gateway was started with (required)
 */

import { createServer } from 'node:http';
import { readFile } from 'node:fs/promises';
import { dirname, join, normalize } from 'node:path';
import { fileURLToPath } from 'node:url';

const PORT = parseInt(process.env.PORT ?? '8788', 10);
const GATEWAY_URL = process.env.GATEWAY_URL ?? 'http://127.0.0.1:8787';
const OPERATOR_TOKEN = process.env.OPERATOR_TOKEN ?? '';

const here = dirname(fileURLToPath(import.meta.url));
const publicDir = join(here, '..', 'public');

const CONTENT_TYPES: Record<string, string> = {
  '.html': 'text/html; charset=utf-8',
  '.js': 'text/javascript; charset=utf-8',
  '.map': 'application/json',
  '.css': 'text/css; charset=utf-8',
};

if (!OPERATOR_TOKEN) {
  console.error('OPERATOR_TOKEN is not set; the console cannot authenticate');
  process.exit(1);
}

const server = createServer(async (req, res) => {
  const url = (req.url ?? '/').split('?')[0] ?? '/';
  try {
    if (url === '/' || url === '/index.html') {
      res.writeHead(200, { 'content-type': CONTENT_TYPES['.html']! });
      res.end(await readFile(join(publicDir, 'index.html')));
      return;
    }
    if (url === '/config.json') {
      res.writeHead(200, { 'content-type': 'application/json' });
      res.end(JSON.stringify({ gatewayUrl: GATEWAY_URL, operatorToken: OPERATOR_TOKEN }));
      return;
    }
    // compiled modules live next to this file
    const clean = normalize(url).replace(/^(\.\.[/\\])+/, '');
    const ext = clean.slice(clean.lastIndexOf('.'));
    if (CONTENT_TYPES[ext] && !clean.includes('..')) {
      res.writeHead(200, { 'content-type': CONTENT_TYPES[ext]! });
      res.end(await readFile(join(here, clean)));
      return;
    }
    res.writeHead(404, { 'content-type': 'text/plain' });
    res.end('not found');
  } catch {
    res.writeHead(404, { 'content-type': 'text/plain' });
    res.end('not found');
  }
});

server.listen(PORT, () => {
  console.log(`approval console on http://127.0.0.1:${PORT} -> gateway ${GATEWAY_URL}`);
});
