// Table browser view-model: the schema listing with click-through to a
// pre-filled query.

import { AgentApi, TableInfo } from './api.js';
import { describe } from './console.js';

export interface BrowserState {
  tables: TableInfo[];
  error: string | null;
  loading: boolean;
}

export class TableBrowser {
  private state: BrowserState = { tables: [], error: null, loading: false };

  constructor(
    private readonly api: AgentApi,
    private readonly onChange: (state: BrowserState) => void,
  ) {}

  snapshot(): BrowserState {
    return { ...this.state, tables: [...this.state.tables] };
  }

  private emit(patch: Partial<BrowserState>): void {
    this.state = { ...this.state, ...patch };
    this.onChange(this.snapshot());
  }

  async refresh(): Promise<void> {
    this.emit({ loading: true });
    try {
      const tables = await this.api.listTables();
      this.emit({ tables, error: null, loading: false });
    } catch (err) {
      this.emit({ error: describe(err), loading: false });
    }
  }
}

export function starQueryFor(table: TableInfo): string {
  return `SELECT * FROM ${table.name}`;
}
