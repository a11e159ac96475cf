// HTTP client for the documented node-agent endpoints. Nothing here is
// privileged: the console uses exactly what any consumer uses.

export interface ColumnInfo {
  name: string;
  type: string;
}

export interface TableInfo {
  name: string;
  ddl: string;
  columns: ColumnInfo[];
  definingFields: string[];
}

export interface ResultTable {
  columns: string[];
  rows: unknown[][];
  warnings?: string[];
}

export interface OneShotOutcome {
  id: string;
  result: ResultTable;
}

export class AgentError extends Error {
  constructor(message: string, readonly type: string, readonly status: number) {
    super(message);
  }
}

type FetchLike = typeof fetch;

export class AgentApi {
  constructor(
    readonly baseUrl: string,
    private readonly fetchFn: FetchLike = fetch.bind(globalThis),
  ) {}

  private async request(method: string, path: string, body?: unknown): Promise<any> {
    const response = await this.fetchFn(`${this.baseUrl}${path}`, {
      method,
      headers: body === undefined ? undefined : { 'Content-Type': 'application/json' },
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let payload: any = {};
    try {
      payload = await response.json();
    } catch {
      payload = {};
    }
    if (!response.ok) {
      const info = payload?.error ?? {};
      throw new AgentError(
        info.message ?? `HTTP ${response.status}`,
        info.type ?? 'ProtocolError',
        response.status,
      );
    }
    return payload;
  }

  listTables(): Promise<TableInfo[]> {
    return this.request('GET', '/tables').then((p) => p.tables as TableInfo[]);
  }

  describeTable(name: string): Promise<TableInfo> {
    return this.request('GET', `/tables/${encodeURIComponent(name)}`);
  }

  runOneShot(sql: string, type: 'history' | 'latest'): Promise<OneShotOutcome> {
    return this.request('POST', '/consumer', { sql, type });
  }

  startContinuous(sql: string, replay = false): Promise<{ id: string }> {
    return this.request('POST', '/consumer', { sql, type: 'continuous', replay });
  }

  pop(consumerId: string, max = 500, timeoutMs = 0): Promise<ResultTable> {
    return this.request(
      'GET',
      `/consumer/${encodeURIComponent(consumerId)}/pop?max=${max}&timeoutMs=${timeoutMs}`,
    );
  }

  stopContinuous(consumerId: string): Promise<void> {
    return this.request('DELETE', `/consumer/${encodeURIComponent(consumerId)}`);
  }

  health(): Promise<{ ok: boolean; agentId: string }> {
    return this.request('GET', '/health');
  }
}
