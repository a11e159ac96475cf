// Canned queries offered by the console; each answer tends to inform the
// next hand-written query.

import { QueryKind } from './console.js';

export interface CannedQuery {
  label: string;
  sql: string;
  kind: QueryKind;
}

export const CANNED_QUERIES: CannedQuery[] = [
  {
    label: 'Current services',
    sql: 'SELECT * FROM Service',
    kind: 'latest',
  },
  {
    label: 'Service health (join)',
    sql:
      'SELECT s.uri, s.site, st.status FROM Service s, ServiceStatus st ' +
      'WHERE s.uri = st.uri',
    kind: 'history',
  },
  {
    label: 'Status history',
    sql: 'SELECT * FROM ServiceStatus',
    kind: 'history',
  },
  {
    label: 'Live CPU load',
    sql: 'SELECT * FROM CpuLoad',
    kind: 'continuous',
  },
];
