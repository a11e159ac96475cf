// Query console state machine, DOM-free for testability: one console per
// page, one active continuous query at a time. Continuous rows append
// strictly in pop order.

import { AgentApi, AgentError, ResultTable } from './api.js';

export type QueryKind = 'history' | 'latest' | 'continuous';

export interface ConsoleState {
  sql: string;
  kind: QueryKind;
  columns: string[];
  rows: unknown[][];
  warnings: string[];
  error: string | null;
  live: boolean;
  delivered: number;
}

type Listener = (state: ConsoleState) => void;
type Scheduler = (fn: () => void, ms: number) => unknown;

export const DEFAULT_POLL_MS = 1000;

export class QueryConsole {
  private state: ConsoleState = {
    sql: '',
    kind: 'latest',
    columns: [],
    rows: [],
    warnings: [],
    error: null,
    live: false,
    delivered: 0,
  };
  private consumerId: string | null = null;
  private generation = 0;

  constructor(
    private readonly api: AgentApi,
    private readonly onChange: Listener,
    private readonly pollMs: number = DEFAULT_POLL_MS,
    private readonly schedule: Scheduler = (fn, ms) => setTimeout(fn, ms),
  ) {}

  snapshot(): ConsoleState {
    return { ...this.state, columns: [...this.state.columns], rows: [...this.state.rows] };
  }

  private emit(patch: Partial<ConsoleState>): void {
    this.state = { ...this.state, ...patch };
    this.onChange(this.snapshot());
  }

  setQuery(sql: string, kind: QueryKind): void {
    this.emit({ sql, kind });
  }

  /** Run the current query; continuous queries start polling. */
  async run(): Promise<void> {
    await this.stop();
    const { sql, kind } = this.state;
    // state (sql, history) is preserved on errors so the operator can fix
    // the query in place
    this.emit({ error: null, warnings: [], rows: [], columns: [], delivered: 0 });
    try {
      if (kind === 'continuous') {
        const started = await this.api.startContinuous(sql);
        this.consumerId = started.id;
        this.generation += 1;
        this.emit({ live: true });
        this.pollSoon(this.generation, 0);
        return;
      }
      const outcome = await this.api.runOneShot(sql, kind);
      this.emit({
        columns: outcome.result.columns,
        rows: outcome.result.rows,
        warnings: outcome.result.warnings ?? [],
      });
    } catch (err) {
      this.emit({ error: describe(err), live: false });
    }
  }

  private pollSoon(generation: number, delay: number): void {
    this.schedule(() => void this.pollOnce(generation), delay);
  }

  private async pollOnce(generation: number): Promise<void> {
    if (generation !== this.generation || this.consumerId === null) return;
    try {
      const got: ResultTable = await this.api.pop(this.consumerId, 500, 0);
      if (generation !== this.generation) return;
      const columns = this.state.columns.length ? this.state.columns : got.columns;
      this.emit({
        columns,
        rows: [...this.state.rows, ...got.rows],
        delivered: this.state.delivered + got.rows.length,
      });
    } catch (err) {
      if (generation !== this.generation) return;
      this.emit({ error: describe(err) });
    }
    this.pollSoon(generation, this.pollMs);
  }

  async stop(): Promise<void> {
    this.generation += 1;
    const id = this.consumerId;
    this.consumerId = null;
    if (id !== null) {
      this.emit({ live: false });
      try {
        await this.api.stopContinuous(id);
      } catch {
        // the consumer may already be gone; soft state reaps it anyway
      }
    }
  }
}

export function describe(err: unknown): string {
  if (err instanceof AgentError) return `${err.type}: ${err.message}`;
  if (err instanceof Error) return err.message;
  return String(err);
}
