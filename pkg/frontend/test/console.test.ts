import { describe, expect, it } from 'vitest';

import { AgentApi } from '../src/api.js';
import { TableBrowser, starQueryFor } from '../src/browser.js';
import { ConsoleState, QueryConsole } from '../src/console.js';

function jsonResponse(status: number, body: unknown): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function apiWith(handler: (method: string, url: string, body?: unknown) => unknown): AgentApi {
  const fetchFn = async (input: RequestInfo | URL, init?: RequestInit) => {
    const url = String(input);
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(String(init.body)) : undefined;
    const outcome = handler(method, url, body);
    if (outcome instanceof Response) return outcome;
    return jsonResponse(200, outcome);
  };
  return new AgentApi('http://agent', fetchFn as typeof fetch);
}

describe('AgentApi', () => {
  it('lists tables from the documented endpoint', async () => {
    const api = apiWith((method, url) => {
      expect(method).toBe('GET');
      expect(url).toBe('http://agent/tables');
      return { tables: [{ name: 'Service', ddl: '', columns: [], definingFields: ['uri'] }] };
    });
    const tables = await api.listTables();
    expect(tables).toHaveLength(1);
    expect(tables[0].name).toBe('Service');
  });

  it('surfaces typed errors', async () => {
    const api = apiWith(() =>
      jsonResponse(400, { error: { type: 'ParseError', message: 'expected FROM' } }),
    );
    await expect(api.runOneShot('SELEKT', 'history')).rejects.toMatchObject({
      type: 'ParseError',
      status: 400,
    });
  });
});

describe('TableBrowser', () => {
  it('loads tables and recovers from unreachable agents', async () => {
    let fail = true;
    const api = apiWith(() => {
      if (fail) throw new Error('connection refused');
      return { tables: [{ name: 'CpuLoad', ddl: '', columns: [], definingFields: ['host'] }] };
    });
    const states: string[] = [];
    const browser = new TableBrowser(api, (s) => states.push(s.error ?? `${s.tables.length}`));
    await browser.refresh();
    expect(browser.snapshot().error).toContain('connection refused');
    fail = false;
    await browser.refresh();
    expect(browser.snapshot().tables.map((t) => t.name)).toEqual(['CpuLoad']);
    expect(browser.snapshot().error).toBeNull();
  });

  it('pre-fills a star query on click-through', () => {
    expect(
      starQueryFor({ name: 'Service', ddl: '', columns: [], definingFields: [] }),
    ).toBe('SELECT * FROM Service');
  });
});

describe('QueryConsole', () => {
  it('renders one-shot results with warnings', async () => {
    const api = apiWith((method, url) => {
      expect(url).toBe('http://agent/consumer');
      return {
        id: 'C1',
        result: { columns: ['uri'], rows: [['u1']], warnings: ['http://x: down'] },
      };
    });
    const states: ConsoleState[] = [];
    const console_ = new QueryConsole(api, (s) => states.push(s));
    console_.setQuery('SELECT uri FROM Service', 'latest');
    await console_.run();
    const last = states.at(-1)!;
    expect(last.columns).toEqual(['uri']);
    expect(last.rows).toEqual([['u1']]);
    expect(last.warnings).toEqual(['http://x: down']);
  });

  it('keeps console state on a parse error', async () => {
    const api = apiWith(() =>
      jsonResponse(400, { error: { type: 'ParseError', message: 'expected FROM' } }),
    );
    const console_ = new QueryConsole(api, () => undefined);
    console_.setQuery('SELEKT', 'history');
    await console_.run();
    const state = console_.snapshot();
    expect(state.error).toContain('ParseError');
    expect(state.sql).toBe('SELEKT'); // the operator's text survives
  });

  it('appends continuous pops in order and stops cleanly', async () => {
    const batches = [
      { columns: ['host', 'RgmaTimestamp'], rows: [['n1', 1]] },
      { columns: ['host', 'RgmaTimestamp'], rows: [['n2', 2], ['n3', 3]] },
      { columns: ['host', 'RgmaTimestamp'], rows: [] },
    ];
    let pops = 0;
    let stopped = false;
    const api = apiWith((method, url) => {
      if (url.endsWith('/consumer') && method === 'POST') return { id: 'C9' };
      if (url.includes('/pop')) return batches[Math.min(pops++, batches.length - 1)];
      if (method === 'DELETE') {
        stopped = true;
        return {};
      }
      throw new Error(`unexpected ${method} ${url}`);
    });
    const pending: Array<() => void> = [];
    const console_ = new QueryConsole(api, () => undefined, 1000, (fn) => pending.push(fn));
    console_.setQuery('SELECT host FROM CpuLoad', 'continuous');
    await console_.run();
    expect(console_.snapshot().live).toBe(true);

    for (let i = 0; i < 3 && pending.length; i++) {
      pending.shift()!();
      await Promise.resolve();
      await new Promise((r) => setTimeout(r, 0));
    }
    const state = console_.snapshot();
    expect(state.rows).toEqual([['n1', 1], ['n2', 2], ['n3', 3]]); // pop order preserved
    expect(state.delivered).toBe(3);

    await console_.stop();
    expect(stopped).toBe(true);
    expect(console_.snapshot().live).toBe(false);
  });
});
