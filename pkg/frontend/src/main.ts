// Bootstrap: read the agent base URL (query param beats localStorage),
// mount the table browser and the query console.

import { AgentApi } from './api.js';
import { TableBrowser, starQueryFor } from './browser.js';
import { CANNED_QUERIES } from './canned.js';
import { QueryConsole, QueryKind } from './console.js';
import { renderConsole, renderTableList } from './render.js';

function agentUrl(): string {
  const fromQuery = new URLSearchParams(window.location.search).get('agent');
  if (fromQuery) {
    localStorage.setItem('gridmon-agent', fromQuery);
    return fromQuery;
  }
  return localStorage.getItem('gridmon-agent') ?? 'http://127.0.0.1:8801';
}

function mount(): void {
  const api = new AgentApi(agentUrl());
  const tablePane = document.getElementById('tables')!;
  const resultPane = document.getElementById('results')!;
  const sqlInput = document.getElementById('sql') as HTMLTextAreaElement;
  const kindSelect = document.getElementById('kind') as HTMLSelectElement;
  const runButton = document.getElementById('run') as HTMLButtonElement;
  const stopButton = document.getElementById('stop') as HTMLButtonElement;
  const cannedSelect = document.getElementById('canned') as HTMLSelectElement;
  const agentLabel = document.getElementById('agent-url')!;
  agentLabel.textContent = api.baseUrl;

  const consoleModel = new QueryConsole(api, (state) => {
    renderConsole(state, resultPane);
    stopButton.disabled = !state.live;
  });
  const browserModel = new TableBrowser(api, (state) => {
    renderTableList(
      state,
      tablePane,
      (table) => {
        sqlInput.value = starQueryFor(table);
        kindSelect.value = 'latest';
      },
      () => void browserModel.refresh(),
    );
  });

  for (const [index, canned] of CANNED_QUERIES.entries()) {
    const option = document.createElement('option');
    option.value = String(index);
    option.textContent = canned.label;
    cannedSelect.appendChild(option);
  }
  cannedSelect.addEventListener('change', () => {
    const canned = CANNED_QUERIES[Number(cannedSelect.value)];
    if (canned) {
      sqlInput.value = canned.sql;
      kindSelect.value = canned.kind;
    }
  });

  runButton.addEventListener('click', () => {
    consoleModel.setQuery(sqlInput.value, kindSelect.value as QueryKind);
    void consoleModel.run();
  });
  stopButton.addEventListener('click', () => void consoleModel.stop());
  window.addEventListener('beforeunload', () => void consoleModel.stop());

  void browserModel.refresh();
}

document.addEventListener('DOMContentLoaded', mount);
