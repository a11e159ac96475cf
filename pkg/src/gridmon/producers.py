"""The five producer engines.

One engine class covers all kinds; what differs is the backing state:
history stores for the database kind, a latest-value store for the latest
kind, per-subscription buffers (plus an append-only log and replay window
for the resilient kind) for the stream kinds, and a user callback for the
on-demand kind. An engine may declare several tables, which is what lets
a database engine answer joins and an archiver target cover every table
it archives.

Insert ordering within one publisher connection is preserved end to end
to each subscription, and store mutations are atomic per batch: a batch
is fully validated against the table and the producer's view before any
of it takes effect.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import uuid
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

from gridmon import wire
from gridmon.core import Tuple, TupleBatch, now_ms, validate_tuple
from gridmon.errors import (
    ConfigError,
    KindMismatchError,
    OwnershipError,
    UnknownIdError,
    UnknownTableError,
    ValidationError,
    ViewViolationError,
)
from gridmon.mediator import serves
from gridmon.model import ProducerKind
from gridmon.query_exec import ResultTable, execute_select
from gridmon.relq import (
    BoundWhere,
    QueryType,
    SelectQuery,
    TableDef,
    ViewPredicate,
    WhereExpr,
    bind_view,
    bind_where,
    ident_key,
    view_matches,
)
from gridmon.store import HistoryStore, LatestStore

log = logging.getLogger(__name__)

DEFAULT_BUFFER_CAPACITY = 10_000
DEFAULT_REPLAY_WINDOW = 10_000
CANONICAL_TIMEOUT_SEC = 10.0

CanonicalHandler = Callable[[SelectQuery], list[Tuple]]


@dataclass(frozen=True)
class CleanupRule:
    """Rows matching ``where`` are deleted every ``interval_sec`` seconds."""

    where: WhereExpr
    interval_sec: int

    def __post_init__(self):
        if self.interval_sec < 1:
            raise ConfigError("cleanup interval must be >= 1s")


@dataclass(frozen=True)
class TableDecl:
    """One table a producer publishes: definition, view slice, cleanup."""

    table: TableDef
    view: ViewPredicate = ViewPredicate()
    cleanup: CleanupRule | None = None


@dataclass(frozen=True)
class ProducerConfig:
    kind: ProducerKind
    declarations: tuple[TableDecl, ...]
    termination_interval_sec: int = 60
    stream_buffer_capacity: int = DEFAULT_BUFFER_CAPACITY
    resilient_log_path: str | None = None
    replay_window_size: int = DEFAULT_REPLAY_WINDOW

    @classmethod
    def single(
        cls,
        kind: ProducerKind,
        table: TableDef,
        view: ViewPredicate | None = None,
        **kwargs,
    ) -> "ProducerConfig":
        decl = TableDecl(table, view if view is not None else ViewPredicate())
        return cls(kind=kind, declarations=(decl,), **kwargs)


class Subscription:
    """A bounded FIFO feeding one consumer sink.

    On overflow the oldest tuple is dropped and counted: for monitoring,
    freshness beats completeness.
    """

    def __init__(
        self,
        subscription_id: str,
        table: TableDef,
        where: BoundWhere | None,
        sink_endpoint: str,
        capacity: int,
    ):
        self.id = subscription_id
        self.table = table
        self.where = where
        self.sink_endpoint = sink_endpoint
        self.capacity = capacity
        self.dropped_count = 0
        self.closed = False
        self._buffer: deque[Tuple] = deque()
        self._cond = threading.Condition()

    def offer(self, tuples: list[Tuple]) -> None:
        with self._cond:
            if self.closed:
                return
            for t in tuples:
                if self.where is not None and not self.where.evaluate(t):
                    continue
                if len(self._buffer) >= self.capacity:
                    self._buffer.popleft()
                    self.dropped_count += 1
                self._buffer.append(t)
            self._cond.notify_all()

    def pop(self, max_tuples: int, timeout: float) -> list[Tuple] | None:
        """Oldest buffered tuples; [] on timeout, None once closed and drained."""
        with self._cond:
            if not self._buffer and not self.closed:
                self._cond.wait(timeout)
            if not self._buffer:
                return None if self.closed else []
            out = []
            while self._buffer and len(out) < max_tuples:
                out.append(self._buffer.popleft())
            return out

    def close(self) -> None:
        with self._cond:
            self.closed = True
            self._cond.notify_all()

    def depth(self) -> int:
        with self._cond:
            return len(self._buffer)


class _CleanupTask(threading.Thread):
    """Per-rule periodic deletion; first run one interval after create."""

    def __init__(self, engine: "ProducerEngine", table_name: str, interval_sec: int):
        super().__init__(name=f"cleanup-{table_name}", daemon=True)
        self.engine = engine
        self.table_name = table_name
        self.interval_sec = interval_sec
        self.stopped = threading.Event()

    def run(self) -> None:
        while not self.stopped.wait(self.interval_sec):
            try:
                self.engine.run_cleanup(table=self.table_name)
            except Exception:
                log.exception("cleanup of %s failed", self.table_name)


class ProducerEngine:
    def __init__(self, config: ProducerConfig, clock=now_ms, engine_id: str | None = None):
        self.config = config
        self.kind = config.kind
        self.clock = clock
        self.id = engine_id or f"P{uuid.uuid4().hex[:10]}"
        self._lock = threading.RLock()
        self._closed = False
        self.owner_token: str | None = None
        self.inserted_tuples = 0
        self.superseded_tuples = 0

        if not config.declarations:
            raise ConfigError("a producer declares at least one table")
        if config.stream_buffer_capacity < 1:
            raise ConfigError("stream buffer capacity must be >= 1")
        if (config.resilient_log_path is not None) != (
            config.kind is ProducerKind.RESILIENT_STREAM
        ):
            raise ConfigError("a resilient log path is required exactly for the resilient kind")

        self._decls: dict[str, TableDecl] = {}
        self._views: dict[str, dict] = {}
        for decl in config.declarations:
            key = ident_key(decl.table.name)
            if key in self._decls:
                raise ConfigError(f"table {decl.table.name} declared twice")
            bind_view(decl.view, decl.table)
            self._decls[key] = decl
            self._views[key] = {c: v for c, v in decl.view.conjuncts}
            if decl.cleanup is not None:
                if self.kind not in (ProducerKind.DATABASE, ProducerKind.LATEST):
                    raise ConfigError("cleanup rules apply only to queryable stores")
                bind_where(decl.cleanup.where, [(decl.table.name, decl.table)])

        self._history: dict[str, HistoryStore] = {}
        self._latest: dict[str, LatestStore] = {}
        self._subs: dict[str, Subscription] = {}
        self._replay: dict[str, deque[Tuple]] = {}
        self._log_file = None
        self._log_path: Path | None = None
        self._handler: CanonicalHandler | None = None
        self._handler_timeout = CANONICAL_TIMEOUT_SEC
        self._cleanup_tasks: list[_CleanupTask] = []

        if self.kind is ProducerKind.DATABASE:
            for key, decl in self._decls.items():
                self._history[key] = HistoryStore(decl.table)
        elif self.kind is ProducerKind.LATEST:
            for key, decl in self._decls.items():
                self._latest[key] = LatestStore(decl.table)
        elif self.kind is ProducerKind.RESILIENT_STREAM:
            for key in self._decls:
                self._replay[key] = deque(maxlen=config.replay_window_size)
            self._open_log(Path(config.resilient_log_path))

        for decl in config.declarations:
            if decl.cleanup is not None:
                task = _CleanupTask(self, decl.table.name, decl.cleanup.interval_sec)
                task.start()
                self._cleanup_tasks.append(task)

    # table helpers

    def table_defs(self) -> dict[str, TableDef]:
        return {key: decl.table for key, decl in self._decls.items()}

    def declaration(self, table: str) -> TableDecl:
        decl = self._decls.get(ident_key(table))
        if decl is None:
            raise UnknownTableError(f"producer {self.id} does not publish {table}")
        return decl

    def _sole_table(self) -> TableDecl:
        if len(self._decls) != 1:
            raise UnknownTableError("engine declares several tables, name one")
        return next(iter(self._decls.values()))

    # resilient log

    def _open_log(self, path: Path) -> None:
        self._log_path = path
        if path.exists():
            defs = self.table_defs()
            with path.open("rb") as f:
                data = f.read()
            recovered = 0
            for raw in data.split(b"\n")[:-1]:
                line = raw + b"\n"
                if wire.is_comment(line) or not raw.strip():
                    continue
                t = self._decode_logged(line, defs)
                self._replay[ident_key(t.table)].append(t)
                recovered += 1
            if data and not data.endswith(b"\n"):
                log.warning("%s: discarding torn trailing record", path)
            log.info("recovered %d tuples from %s", recovered, path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self._log_file = path.open("ab")

    def _decode_logged(self, line: bytes, defs: dict[str, TableDef]) -> Tuple:
        try:
            table_name = json.loads(line).get("table", "")
        except json.JSONDecodeError:
            raise ValidationError(f"unreadable log record in {self._log_path}") from None
        table = defs.get(ident_key(table_name))
        if table is None:
            raise ValidationError(f"log record for undeclared table {table_name}")
        return wire.decode_tuple(line, table)

    def replay_window(self, table: str) -> list[Tuple]:
        with self._lock:
            return list(self._replay.get(ident_key(table), ()))

    # insert

    def insert(self, batch: TupleBatch, owner_token: str | None = None) -> int:
        """Validate and apply one batch; returns the processed-tuple count.

        For the latest kind the count includes tuples superseded by a
        newer stamp already in the store: they were processed, they just
        did not win.
        """
        if not self.kind.insertable:
            raise KindMismatchError("this producer kind takes no inserts; it answers on demand")
        with self._lock:
            if self._closed:
                raise UnknownIdError(f"producer {self.id} is closed")
            if self.owner_token is not None and owner_token != self.owner_token:
                raise OwnershipError(
                    f"producer {self.id} is controlled by an archiver; direct inserts are rejected"
                )
            key = ident_key(batch.table)
            decl = self.declaration(batch.table)
            view = self._views[key]
            validated: list[Tuple] = []
            for t in batch.tuples:
                good = validate_tuple(decl.table, t, clock=self.clock)
                if not view_matches(view, good):
                    raise ViewViolationError(
                        f"tuple outside the declared view of {decl.table.name}"
                    )
                validated.append(good)

            if self.kind is ProducerKind.DATABASE:
                self._history[key].append(validated)
            elif self.kind is ProducerKind.LATEST:
                applied = self._latest[key].replace(validated)
                self.superseded_tuples += len(validated) - applied
            else:
                if self._log_file is not None:
                    for t in validated:
                        self._log_file.write(wire.encode_tuple(t))
                    self._log_file.flush()
                    os.fsync(self._log_file.fileno())
                    self._replay[key].extend(validated)
                for sub in self._subs.values():
                    if ident_key(sub.table.name) == key:
                        sub.offer(validated)
            self.inserted_tuples += len(validated)
            return len(validated)

    def insert_sql(self, statement, owner_token: str | None = None) -> int:
        """Apply a parsed INSERT statement."""
        decl = self.declaration(statement.table)
        tuples = tuple(
            Tuple(decl.table.name, dict(zip(statement.columns, row)))
            for row in statement.rows
        )
        return self.insert(TupleBatch(decl.table.name, tuples), owner_token=owner_token)

    # queries

    def answer_query(self, query: SelectQuery, query_type: QueryType) -> ResultTable:
        if not serves(self.kind, query_type):
            raise KindMismatchError(
                f"{self.kind.value} producers do not serve {query_type.value} queries"
            )
        if query.is_join and self.kind is not ProducerKind.DATABASE:
            raise KindMismatchError("only the database kind executes joins")
        if self.kind is ProducerKind.CANONICAL:
            return self._answer_canonical(query)
        with self._lock:
            sources = {key: decl.table for key, decl in self._decls.items()}
            if self.kind is ProducerKind.DATABASE:
                rows_of = lambda name: self._history[ident_key(name)].scan()
            else:
                rows_of = lambda name: self._latest[ident_key(name)].scan()
            return execute_select(query, sources, rows_of)

    def _answer_canonical(self, query: SelectQuery) -> ResultTable:
        with self._lock:
            handler = self._handler
        if handler is None:
            raise ConfigError("no handler registered for this on-demand producer")
        decl = self.declaration(query.tables[0].name)
        outcome: dict = {}

        def call():
            try:
                outcome["tuples"] = handler(query)
            except Exception as exc:
                outcome["error"] = exc

        worker = threading.Thread(target=call, daemon=True)
        worker.start()
        worker.join(self._handler_timeout)
        if worker.is_alive():
            raise ValidationError("handler timed out")
        if "error" in outcome:
            raise ValidationError(f"handler failed: {outcome['error']}")
        view = self._views[ident_key(decl.table.name)]
        checked = []
        for t in outcome["tuples"]:
            good = validate_tuple(decl.table, t, clock=self.clock)
            if not view_matches(view, good):
                raise ViewViolationError("handler returned a tuple outside the declared view")
            checked.append(good)
        return execute_select(
            query, {ident_key(decl.table.name): decl.table}, lambda _: checked
        )

    def register_canonical(self, handler: CanonicalHandler) -> None:
        if self.kind is not ProducerKind.CANONICAL:
            raise KindMismatchError("handlers attach to the on-demand kind only")
        with self._lock:
            self._handler = handler  # re-registration replaces

    # subscriptions

    def subscribe(
        self,
        sink_endpoint: str,
        table: str | None = None,
        where: WhereExpr | None = None,
        replay: bool = False,
    ) -> Subscription:
        if not self.kind.streaming:
            raise KindMismatchError("only stream kinds accept subscriptions")
        decl = self.declaration(table) if table is not None else self._sole_table()
        bound = (
            bind_where(where, [(decl.table.name, decl.table)]) if where is not None else None
        )
        sub = Subscription(
            subscription_id=f"S{uuid.uuid4().hex[:10]}",
            table=decl.table,
            where=bound,
            sink_endpoint=sink_endpoint,
            capacity=self.config.stream_buffer_capacity,
        )
        with self._lock:
            if replay and self.kind is ProducerKind.RESILIENT_STREAM:
                sub.offer(list(self._replay[ident_key(decl.table.name)]))
            self._subs[sub.id] = sub
        return sub

    def unsubscribe(self, subscription_id: str) -> None:
        with self._lock:
            sub = self._subs.pop(subscription_id, None)
        if sub is None:
            raise UnknownIdError(f"no subscription {subscription_id}")
        sub.close()

    def subscription(self, subscription_id: str) -> Subscription:
        with self._lock:
            sub = self._subs.get(subscription_id)
        if sub is None:
            raise UnknownIdError(f"no subscription {subscription_id}")
        return sub

    def subscriptions(self) -> list[Subscription]:
        with self._lock:
            return list(self._subs.values())

    # cleanup

    def run_cleanup(self, now: int | None = None, table: str | None = None) -> int:
        """Apply configured deletion rules; returns rows deleted.

        ``now`` names the execution instant for logging symmetry; the
        rules themselves are static WHERE clauses (the grammar has no
        clock arithmetic, so age-based thresholds are fixed when the
        rule is written).
        """
        if self.kind not in (ProducerKind.DATABASE, ProducerKind.LATEST):
            raise KindMismatchError("stream kinds hold no queryable store to clean")
        deleted = 0
        with self._lock:
            for key, decl in self._decls.items():
                if decl.cleanup is None:
                    continue
                if table is not None and ident_key(table) != key:
                    continue
                bound = bind_where(decl.cleanup.where, [(decl.table.name, decl.table)])
                store = self._history.get(key) or self._latest.get(key)
                deleted += store.delete_where(bound.evaluate)
        return deleted

    # ownership

    def acquire(self, token: str) -> None:
        with self._lock:
            if self.owner_token is not None and self.owner_token != token:
                raise OwnershipError(f"producer {self.id} is already controlled")
            self.owner_token = token

    def release(self, token: str) -> None:
        with self._lock:
            if self.owner_token == token:
                self.owner_token = None

    # introspection

    def store_rows(self, table: str) -> list[Tuple]:
        with self._lock:
            key = ident_key(table)
            if self.kind is ProducerKind.DATABASE:
                return self._history[key].scan()
            if self.kind is ProducerKind.LATEST:
                return self._latest[key].scan()
            raise KindMismatchError("stream kinds hold no queryable store")

    def stats(self) -> dict:
        with self._lock:
            per_table = {}
            for key, decl in self._decls.items():
                info: dict = {"view": bool(decl.view.conjuncts)}
                if key in self._history:
                    info["rows"] = len(self._history[key])
                if key in self._latest:
                    info["rows"] = len(self._latest[key])
                if key in self._replay:
                    info["replayWindow"] = len(self._replay[key])
                per_table[decl.table.name] = info
            return {
                "id": self.id,
                "kind": self.kind.value,
                "insertedTuples": self.inserted_tuples,
                "supersededTuples": self.superseded_tuples,
                "owned": self.owner_token is not None,
                "tables": per_table,
                "logBytes": self._log_path.stat().st_size
                if self._log_path is not None and self._log_path.exists()
                else 0,
                "subscriptions": [
                    {
                        "id": s.id,
                        "table": s.table.name,
                        "sink": s.sink_endpoint,
                        "depth": s.depth(),
                        "droppedCount": s.dropped_count,
                    }
                    for s in self._subs.values()
                ],
            }

    def close(self) -> None:
        for task in self._cleanup_tasks:
            task.stopped.set()
        with self._lock:
            self._closed = True
            subs = list(self._subs.values())
            self._subs.clear()
            if self._log_file is not None:
                self._log_file.close()
                self._log_file = None
        for sub in subs:
            sub.close()
