"""The per-VO soft-state registry and schema.

Stores table definitions and producer/consumer registrations with
termination deadlines; answers mediator lookups; notifies live consumers
when a newly registered producer matches their standing query. It stores
descriptions only, never tuples.

All public operations are linearizable under one lock; notification
delivery runs on a separate dispatcher thread outside the critical
section, with bounded retries (consumers also poll as a fallback, and
dead consumers are reaped by the sweeper).
"""

from __future__ import annotations

import json
import logging
import queue
import threading
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from gridmon.core import now_ms
from gridmon.errors import SchemaConflictError, UnknownIdError, UnknownTableError
from gridmon.mediator import eligible, query_aliases, serves
from gridmon.model import ConsumerEntry, ProducerEntry, ProducerKind, SchemaEntry
from gridmon.relq import (
    QueryType,
    SelectQuery,
    TableDef,
    ViewPredicate,
    WhereExpr,
    bind_view,
    ident_key,
    predicate_consistent,
    unparse_create_table,
    parse_create_table,
)

log = logging.getLogger(__name__)

MIN_INTERVAL_SEC = 1
MAX_INTERVAL_SEC = 86400
DEFAULT_INTERVAL_SEC = 60
DEFAULT_SWEEP_PERIOD_SEC = 5.0

DeliverFn = Callable[[ConsumerEntry, ProducerEntry], bool]


class Notifier:
    """At-least-once notification dispatcher with bounded retries."""

    def __init__(self, deliver: DeliverFn, attempts: int = 3, retry_delay: float = 1.0):
        self._deliver = deliver
        self._attempts = attempts
        self._retry_delay = retry_delay
        self._queue: "queue.Queue[tuple[ConsumerEntry, ProducerEntry] | None]" = queue.Queue()
        self._idle = threading.Event()
        self._idle.set()
        self._thread = threading.Thread(target=self._run, name="registry-notifier", daemon=True)
        self._thread.start()

    def submit(self, consumer: ConsumerEntry, producer: ProducerEntry) -> None:
        self._idle.clear()
        self._queue.put((consumer, producer))

    def _run(self) -> None:
        while True:
            item = self._queue.get()
            if item is None:
                return
            consumer, producer = item
            for attempt in range(self._attempts):
                try:
                    if self._deliver(consumer, producer):
                        break
                except Exception as exc:
                    log.warning("notify %s failed: %s", consumer.endpoint, exc)
                if attempt + 1 < self._attempts:
                    time.sleep(self._retry_delay)
            else:
                log.warning("dropping notification for %s after %d attempts",
                            consumer.endpoint, self._attempts)
            if self._queue.empty():
                self._idle.set()

    def wait_idle(self, timeout: float = 5.0) -> bool:
        return self._idle.wait(timeout)

    def stop(self) -> None:
        self._queue.put(None)


@dataclass
class _Registration:
    entry: ProducerEntry | ConsumerEntry
    interval_sec: int


class RegistryService:
    """One instance per VO; all state lives here."""

    def __init__(self, deliver: DeliverFn | None = None, clock=now_ms):
        self._clock = clock
        self._lock = threading.RLock()
        self._tables: dict[str, SchemaEntry] = {}
        self._producers: dict[str, _Registration] = {}
        self._consumers: dict[str, _Registration] = {}
        self.notifier = Notifier(deliver) if deliver is not None else None

    # schema

    def create_table(self, table: TableDef) -> SchemaEntry:
        with self._lock:
            key = ident_key(table.name)
            existing = self._tables.get(key)
            if existing is not None:
                if existing.table.same_definition(table):
                    return existing
                raise SchemaConflictError(
                    f"table {table.name} already declared as "
                    f"{unparse_create_table(existing.table)}"
                )
            entry = SchemaEntry(table, self._clock())
            self._tables[key] = entry
            return entry

    def get_table(self, name: str) -> TableDef:
        with self._lock:
            entry = self._tables.get(ident_key(name))
            if entry is None:
                raise UnknownTableError(f"unknown table {name}")
            return entry.table

    def list_tables(self) -> list[TableDef]:
        with self._lock:
            return [e.table for e in self._tables.values()]

    def schema_entries(self) -> list[SchemaEntry]:
        with self._lock:
            return list(self._tables.values())

    def schema_entry(self, name: str) -> SchemaEntry:
        with self._lock:
            entry = self._tables.get(ident_key(name))
            if entry is None:
                raise UnknownTableError(f"unknown table {name}")
            return entry

    # registration

    def _check_interval(self, interval_sec: int) -> None:
        if not MIN_INTERVAL_SEC <= interval_sec <= MAX_INTERVAL_SEC:
            raise ValueError(
                f"termination interval {interval_sec}s outside "
                f"[{MIN_INTERVAL_SEC}, {MAX_INTERVAL_SEC}]"
            )

    def register_producer(
        self,
        endpoint: str,
        table: str,
        view: ViewPredicate,
        kind: ProducerKind,
        interval_sec: int,
        producer_id: str | None = None,
    ) -> ProducerEntry:
        self._check_interval(interval_sec)
        with self._lock:
            table_def = self.get_table(table)
            bind_view(view, table_def)  # BindError if the view does not fit
            pid = producer_id or f"p-{uuid.uuid4().hex[:12]}"
            entry = ProducerEntry(
                producer_id=pid,
                endpoint=endpoint,
                table=table_def.name,
                view=view,
                kind=kind,
                termination_time=self._clock() + interval_sec * 1000,
            )
            self._producers[pid] = _Registration(entry, interval_sec)
        self.match_and_notify(entry)
        return entry

    def register_consumer(
        self,
        endpoint: str,
        query: SelectQuery,
        query_type: QueryType,
        interval_sec: int,
        consumer_id: str | None = None,
    ) -> tuple[ConsumerEntry, list[ProducerEntry]]:
        self._check_interval(interval_sec)
        with self._lock:
            defs = {ident_key(t.name): self.get_table(t.name) for t in query.tables}
            cid = consumer_id or f"c-{uuid.uuid4().hex[:12]}"
            entry = ConsumerEntry(
                consumer_id=cid,
                endpoint=endpoint,
                query=query,
                query_type=query_type,
                termination_time=self._clock() + interval_sec * 1000,
            )
            self._consumers[cid] = _Registration(entry, interval_sec)
            matches = [
                reg.entry
                for reg in self._live_producers()
                if ident_key(reg.entry.table) in defs
                and eligible(reg.entry, query, query_type, defs[ident_key(reg.entry.table)])
            ]
            return entry, matches

    def heartbeat(self, client_id: str) -> int:
        """Renew a registration by its original interval; unknown ids tell
        the client it must re-register."""
        with self._lock:
            for book in (self._producers, self._consumers):
                reg = book.get(client_id)
                if reg is not None:
                    deadline = self._clock() + reg.interval_sec * 1000
                    reg.entry = reg.entry.renewed(deadline)
                    return deadline
        raise UnknownIdError(f"no live registration {client_id}")

    def unregister(self, client_id: str) -> None:
        with self._lock:
            if self._producers.pop(client_id, None) is None:
                if self._consumers.pop(client_id, None) is None:
                    raise UnknownIdError(f"no live registration {client_id}")

    # expiry

    def sweep(self, now: int | None = None) -> list[str]:
        now = self._clock() if now is None else now
        with self._lock:
            expired = [
                cid for cid, reg in self._producers.items() if reg.entry.termination_time < now
            ] + [
                cid for cid, reg in self._consumers.items() if reg.entry.termination_time < now
            ]
            for cid in expired:
                self._producers.pop(cid, None)
                self._consumers.pop(cid, None)
            return expired

    def _live_producers(self) -> list[_Registration]:
        now = self._clock()
        return [r for r in self._producers.values() if r.entry.termination_time >= now]

    def _live_consumers(self) -> list[_Registration]:
        now = self._clock()
        return [r for r in self._consumers.values() if r.entry.termination_time >= now]

    # lookups

    def lookup(
        self,
        table: str,
        query_type: QueryType,
        where: WhereExpr | None = None,
        aliases: set[str] | None = None,
    ) -> list[ProducerEntry]:
        with self._lock:
            self.sweep()
            table_def = self.get_table(table)
            out = []
            for reg in self._live_producers():
                entry = reg.entry
                if ident_key(entry.table) != ident_key(table_def.name):
                    continue
                if not serves(entry.kind, query_type):
                    continue
                if not predicate_consistent(entry.view, where, table_def, aliases=aliases):
                    continue
                out.append(entry)
            return out

    def match_and_notify(self, producer: ProducerEntry) -> list[ConsumerEntry]:
        """Queue a notification to every live consumer the new producer is
        relevant to; returns the matched consumers."""
        with self._lock:
            table_def = self.get_table(producer.table)
            matched = [
                reg.entry
                for reg in self._live_consumers()
                if self._consumer_matches(reg.entry, producer, table_def)
            ]
        if self.notifier is not None:
            for consumer in matched:
                self.notifier.submit(consumer, producer)
        return matched

    def _consumer_matches(
        self, consumer: ConsumerEntry, producer: ProducerEntry, table_def: TableDef
    ) -> bool:
        if ident_key(producer.table) not in {
            ident_key(t.name) for t in consumer.query.tables
        }:
            return False
        if not serves(producer.kind, consumer.query_type):
            return False
        return predicate_consistent(
            producer.view,
            consumer.query.where,
            table_def,
            aliases=query_aliases(consumer.query, producer.table),
        )

    # introspection and persistence

    def counts(self) -> dict:
        with self._lock:
            return {
                "tables": len(self._tables),
                "producers": len(self._producers),
                "consumers": len(self._consumers),
            }

    def save_snapshot(self, path: str | Path) -> None:
        with self._lock:
            state = {
                "tables": [unparse_create_table(e.table) for e in self._tables.values()],
                "producers": [
                    {"entry": r.entry.to_json(), "intervalSec": r.interval_sec}
                    for r in self._producers.values()
                ],
                "consumers": [
                    {"entry": r.entry.to_json(), "intervalSec": r.interval_sec}
                    for r in self._consumers.values()
                ],
            }
        Path(path).write_text(json.dumps(state, indent=1))

    def load_snapshot(self, path: str | Path) -> None:
        state = json.loads(Path(path).read_text())
        with self._lock:
            for ddl in state.get("tables", []):
                self.create_table(parse_create_table(ddl))
            for rec in state.get("producers", []):
                entry = ProducerEntry.from_json(rec["entry"])
                self._producers[entry.producer_id] = _Registration(entry, rec["intervalSec"])
            for rec in state.get("consumers", []):
                entry = ConsumerEntry.from_json(rec["entry"])
                self._consumers[entry.consumer_id] = _Registration(entry, rec["intervalSec"])

    def stop(self) -> None:
        if self.notifier is not None:
            self.notifier.stop()
