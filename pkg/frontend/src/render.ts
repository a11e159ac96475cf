// Thin DOM helpers; all state lives in the view-models.

import { TableInfo } from './api.js';
import { BrowserState } from './browser.js';
import { ConsoleState } from './console.js';

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) node.setAttribute(key, value);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderResultTable(columns: string[], rows: unknown[][]): HTMLTableElement {
  const table = el('table', { class: 'results' });
  const head = table.createTHead().insertRow();
  for (const column of columns) head.appendChild(el('th', {}, column));
  const body = table.createTBody();
  for (const row of rows) {
    const tr = body.insertRow();
    for (const value of row) tr.insertCell().textContent = String(value);
  }
  return table;
}

export function renderTableList(
  state: BrowserState,
  container: HTMLElement,
  onCompose: (table: TableInfo) => void,
  onRetry: () => void,
): void {
  container.replaceChildren();
  if (state.error) {
    container.appendChild(banner(`agent unreachable: ${state.error}`, onRetry));
    return;
  }
  if (state.loading) {
    container.appendChild(el('p', { class: 'muted' }, 'loading tables...'));
    return;
  }
  if (!state.tables.length) {
    container.appendChild(el('p', { class: 'muted' }, 'no tables declared yet'));
    return;
  }
  for (const table of state.tables) {
    const card = el('div', { class: 'table-card' });
    const title = el('a', { href: '#', class: 'table-name' }, table.name);
    title.addEventListener('click', (event) => {
      event.preventDefault();
      onCompose(table);
    });
    card.appendChild(title);
    const cols = table.columns
      .map((c) => (table.definingFields.includes(c.name) ? `${c.name}* ${c.type}` : `${c.name} ${c.type}`))
      .join(', ');
    card.appendChild(el('div', { class: 'muted' }, cols + ', RgmaTimestamp'));
    container.appendChild(card);
  }
}

export function renderConsole(state: ConsoleState, container: HTMLElement): void {
  container.replaceChildren();
  if (state.error) container.appendChild(el('div', { class: 'error' }, state.error));
  for (const warning of state.warnings) {
    container.appendChild(el('div', { class: 'warning' }, `warning: ${warning}`));
  }
  if (state.live) {
    container.appendChild(
      el('div', { class: 'muted' }, `live: ${state.delivered} tuple(s) delivered`),
    );
  }
  if (state.columns.length) {
    container.appendChild(renderResultTable(state.columns, state.rows));
  } else if (!state.error && !state.live) {
    container.appendChild(el('p', { class: 'muted' }, 'no query run yet'));
  }
}

export function banner(message: string, onRetry: () => void): HTMLElement {
  const box = el('div', { class: 'error banner' });
  box.appendChild(el('span', {}, message));
  const retry = el('button', {}, 'retry');
  retry.addEventListener('click', onRetry);
  box.appendChild(retry);
  return box;
}
