"""The consumer engine: plan a query through the registry, fan out to the
chosen producers, and combine what comes back.

History and latest queries are one-shot. Latest queries fetch each
target's full current set, merge by defining key, and only then apply the
query's filter: current-value semantics come first, so a timestamp filter
sees the merged value, not per-producer survivors.

Continuous queries keep a registration alive, subscribe to every eligible
stream producer, absorb registry notifications to pick up producers that
appear later, and buffer pushed tuples for ``pop``.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from gridmon import mediator, wire
from gridmon.agents.client import ProducerClient, RegistryClient
from gridmon.core import Tuple, latest_merge
from gridmon.errors import GridmonError, ValidationError
from gridmon.mediator import PlanTarget, QueryPlan
from gridmon.model import ProducerEntry
from gridmon.query_exec import ResultTable, execute_select, projection_refs
from gridmon.relq import (
    And,
    ColumnRef,
    Comparison,
    Or,
    QueryType,
    SelectQuery,
    TableDef,
    WhereExpr,
    ident_key,
    parse_select,
    unparse_select,
    unparse_where,
)

log = logging.getLogger(__name__)

DEFAULT_BUFFER_CAPACITY = 10_000
DEFAULT_TARGET_TIMEOUT = 5.0


def _dequalify(expr: WhereExpr | None) -> WhereExpr | None:
    """Strip table qualifiers for single-table use (subscription filters)."""
    if expr is None:
        return None
    if isinstance(expr, And):
        return And(_dequalify(expr.left), _dequalify(expr.right))
    if isinstance(expr, Or):
        return Or(_dequalify(expr.left), _dequalify(expr.right))
    assert isinstance(expr, Comparison)
    right = expr.right
    if isinstance(right, ColumnRef):
        right = ColumnRef(right.column)
    return Comparison(ColumnRef(expr.left.column), expr.op, right)


@dataclass
class TargetReport:
    endpoint: str
    ok: bool
    error: str = ""
    rows: int = 0

    def to_json(self) -> dict:
        out: dict = {"endpoint": self.endpoint, "ok": self.ok, "rows": self.rows}
        if self.error:
            out["error"] = self.error
        return out


class ConsumerEngine:
    """One engine serves one client query; handles are independent."""

    def __init__(
        self,
        query: SelectQuery | str,
        query_type: QueryType,
        registry: RegistryClient,
        endpoint: str = "",
        consumer_id: str | None = None,
        interval_sec: int = 60,
        replay: bool = False,
        buffer_capacity: int = DEFAULT_BUFFER_CAPACITY,
        target_timeout: float = DEFAULT_TARGET_TIMEOUT,
        exclude_endpoints: set[str] | None = None,
    ):
        self.query = parse_select(query) if isinstance(query, str) else query
        self.query_type = query_type
        self.registry = registry
        self.id = consumer_id or f"C{uuid.uuid4().hex[:10]}"
        self.endpoint = endpoint
        self.interval_sec = interval_sec
        self.replay = replay
        self.target_timeout = target_timeout
        self.exclude_endpoints = exclude_endpoints or set()

        self.defs: dict[str, TableDef] = {}
        self._lock = threading.RLock()
        self._cond = threading.Condition(self._lock)
        self._buffer: deque[Tuple] = deque()
        self._capacity = buffer_capacity
        self.dropped_count = 0
        self.received_count = 0
        self._subscribed: dict[tuple[str, str], str] = {}  # (endpoint, table) -> sub id
        self._pending: set[tuple[str, str]] = set()
        self._active_pushes = 0
        self._stopped = False

    # shared plumbing

    def _load_defs(self) -> None:
        for ref in self.query.tables:
            key = ident_key(ref.name)
            if key not in self.defs:
                self.defs[key] = self.registry.get_table(ref.name)

    def _lookup_all(self) -> list[ProducerEntry]:
        self._load_defs()
        where_text = unparse_where(self.query.where) if self.query.where is not None else ""
        entries: dict[str, ProducerEntry] = {}
        for ref in self.query.tables:
            aliases = mediator.query_aliases(self.query, ref.name)
            for entry in self.registry.lookup(ref.name, self.query_type, where_text, aliases):
                entries[entry.producer_id] = entry
        return list(entries.values())

    def build_plan(self) -> QueryPlan:
        return mediator.plan(self.query, self.query_type, self._lookup_all(), self.defs)

    @property
    def sole_table(self) -> TableDef:
        return self.defs[ident_key(self.query.tables[0].name)]

    # one-shot queries

    def run_once(self) -> tuple[ResultTable, list[TargetReport]]:
        if self.query_type not in (QueryType.HISTORY, QueryType.LATEST):
            raise ValueError("run_once serves history and latest queries")
        plan = self.build_plan()
        if self.query_type is QueryType.HISTORY:
            result, reports = self._run_history(plan)
        else:
            result, reports = self._run_latest(plan)
        result.warnings = [f"{r.endpoint}: {r.error}" for r in reports if not r.ok]
        return result, reports

    def _fan_out(self, plan: QueryPlan, sql: str) -> list[tuple[PlanTarget, ResultTable | Exception]]:
        def one(target: PlanTarget):
            client = ProducerClient(target.endpoint, timeout=self.target_timeout)
            try:
                return target, client.query(sql, self.query_type, timeout=self.target_timeout)
            except Exception as exc:
                return target, exc
            finally:
                client.close()

        if not plan.targets:
            return []
        with ThreadPoolExecutor(max_workers=min(8, len(plan.targets))) as pool:
            return list(pool.map(one, plan.targets))

    def _empty_result(self) -> ResultTable:
        defs = [self.defs[ident_key(t.name)] for t in self.query.tables]
        return ResultTable([str(r) for r in projection_refs(self.query, defs)], [])

    def _run_history(self, plan: QueryPlan) -> tuple[ResultTable, list[TargetReport]]:
        result = self._empty_result()
        reports = []
        for target, outcome in self._fan_out(plan, unparse_select(self.query)):
            if isinstance(outcome, Exception):
                reports.append(TargetReport(target.endpoint, False, str(outcome)))
            else:
                result.rows.extend(outcome.rows)
                reports.append(TargetReport(target.endpoint, True, rows=len(outcome.rows)))
        return result, reports

    def _run_latest(self, plan: QueryPlan) -> tuple[ResultTable, list[TargetReport]]:
        table = self.sole_table
        star = f"SELECT * FROM {table.name}"
        collected: list[Tuple] = []
        reports = []
        for target, outcome in self._fan_out(plan, star):
            if isinstance(outcome, Exception):
                reports.append(TargetReport(target.endpoint, False, str(outcome)))
                continue
            tuples = [self._row_to_tuple(row, table) for row in outcome.rows]
            collected.extend(tuples)
            reports.append(TargetReport(target.endpoint, True, rows=len(tuples)))
        merged = latest_merge(collected, table)
        result = execute_select(
            self.query, {ident_key(table.name): table}, lambda _: merged
        )
        return result, reports

    @staticmethod
    def _row_to_tuple(row: list, table: TableDef) -> Tuple:
        names = table.column_names()
        if len(row) != len(names) + 1:
            raise ValidationError(f"bad row width from producer of {table.name}")
        return Tuple(table.name, dict(zip(names, row[:-1])), row[-1])

    # continuous queries

    def start(self) -> None:
        if self.query_type is not QueryType.CONTINUOUS:
            raise ValueError("start() is for continuous queries")
        if len(self.query.tables) != 1:
            raise ValueError("continuous queries are single-table")
        self._load_defs()
        _, producers = self.registry.register_consumer(
            endpoint=self.endpoint,
            query=unparse_select(self.query),
            query_type=self.query_type,
            interval_sec=self.interval_sec,
            consumer_id=self.id,
        )
        for entry in producers:
            self._maybe_subscribe(entry)

    def reregister(self) -> None:
        """Re-announce under the same id (registry restarted or swept us)."""
        _, producers = self.registry.register_consumer(
            endpoint=self.endpoint,
            query=unparse_select(self.query),
            query_type=self.query_type,
            interval_sec=self.interval_sec,
            consumer_id=self.id,
        )
        for entry in producers:
            self._maybe_subscribe(entry)

    def handle_notification(self, entry: ProducerEntry) -> bool:
        """Subscribe to a newly announced producer if the plan would include
        it; duplicates and irrelevant producers are ignored."""
        if self._stopped or self.query_type is not QueryType.CONTINUOUS:
            return False
        return self._maybe_subscribe(entry)

    def refresh_targets(self) -> None:
        """Poll the registry for producers this stream is missing.

        The fallback for dropped notifications; runs on the heartbeat
        cadence so a standing query converges even if every notification
        to it was lost."""
        if self._stopped or self.query_type is not QueryType.CONTINUOUS:
            return
        try:
            for entry in self._lookup_all():
                self._maybe_subscribe(entry)
        except GridmonError as exc:
            log.debug("target refresh failed: %s", exc)

    def _maybe_subscribe(self, entry: ProducerEntry) -> bool:
        table = self.defs.get(ident_key(entry.table))
        if table is None:
            return False
        if entry.endpoint in self.exclude_endpoints:
            return False
        if not mediator.eligible(entry, self.query, self.query_type, table):
            return False
        key = (entry.endpoint, ident_key(entry.table))
        with self._lock:
            if key in self._subscribed or key in self._pending or self._stopped:
                return False
            self._pending.add(key)
        where = _dequalify(self.query.where)
        client = ProducerClient(entry.endpoint, timeout=self.target_timeout)
        try:
            sub_id = client.subscribe(
                sink=f"{self.endpoint}/push",
                table=entry.table,
                where=unparse_where(where) if where is not None else "",
                replay=self.replay,
            )
            with self._lock:
                self._subscribed[key] = sub_id
            return True
        except GridmonError as exc:
            log.warning("subscribe to %s failed: %s", entry.endpoint, exc)
            return False
        finally:
            with self._lock:
                self._pending.discard(key)
            client.close()

    def ingest_lines(self, lines) -> int:
        """Feed one producer's push stream into the buffer, in arrival order."""
        table = self.sole_table
        count = 0
        with self._lock:
            self._active_pushes += 1
        try:
            for line in lines:
                if wire.is_comment(line) or not line.strip():
                    continue
                t = wire.decode_tuple(line, table)
                with self._cond:
                    if len(self._buffer) >= self._capacity:
                        self._buffer.popleft()
                        self.dropped_count += 1
                    self._buffer.append(t)
                    self.received_count += 1
                    count += 1
                    self._cond.notify_all()
        finally:
            with self._lock:
                self._active_pushes -= 1
        return count

    def pop(self, max_tuples: int, timeout: float) -> list[Tuple]:
        """Delivered tuples in arrival order; blocks up to ``timeout``."""
        with self._cond:
            if not self._buffer and not self._stopped:
                self._cond.wait(timeout)
            out: list[Tuple] = []
            while self._buffer and len(out) < max_tuples:
                out.append(self._buffer.popleft())
            return out

    def drain(self, max_wait: float = 5.0) -> list[Tuple]:
        """Wait for in-flight pushes to finish, then empty the buffer."""
        deadline = time.monotonic() + max_wait
        while time.monotonic() < deadline:
            with self._lock:
                if self._active_pushes == 0:
                    break
            time.sleep(0.05)
        with self._cond:
            out = list(self._buffer)
            self._buffer.clear()
            return out

    def subscriptions(self) -> dict[tuple[str, str], str]:
        with self._lock:
            return dict(self._subscribed)

    def stop(self, unregister: bool = True) -> None:
        with self._lock:
            if self._stopped:
                return
            self._stopped = True
            subscribed = dict(self._subscribed)
        for (endpoint, _table), sub_id in subscribed.items():
            client = ProducerClient(endpoint, timeout=self.target_timeout)
            try:
                client.unsubscribe(sub_id)
            except GridmonError as exc:
                log.debug("unsubscribe from %s failed: %s", endpoint, exc)
            finally:
                client.close()
        if unregister:
            try:
                self.registry.unregister_consumer(self.id)
            except GridmonError:
                pass
        with self._cond:
            self._cond.notify_all()

    def stats(self) -> dict:
        with self._lock:
            return {
                "id": self.id,
                "query": unparse_select(self.query),
                "queryType": self.query_type.value,
                "bufferDepth": len(self._buffer),
                "droppedCount": self.dropped_count,
                "receivedCount": self.received_count,
                "subscriptions": [
                    {"endpoint": endpoint, "table": table, "subscriptionId": sid}
                    for (endpoint, table), sid in self._subscribed.items()
                ],
            }
