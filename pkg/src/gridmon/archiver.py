"""The archiver: a combined consumer-producer.

Given a target producer (any insertable kind) and a list of tables, it
takes control of the target, starts one continuous consumer per table,
and re-inserts everything that streams in, preserving the original
timestamps so latest semantics downstream equal latest semantics at the
sources. Re-publication batches tuples (100 tuples or 200 ms, whichever
first). Its consumers never subscribe to the target itself, which keeps
layered fan-in topologies loop-free.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from dataclasses import dataclass, field

from gridmon.agents.client import ProducerClient, RegistryClient
from gridmon.consumer import ConsumerEngine
from gridmon.core import Tuple, now_ms
from gridmon.errors import ConfigError, GridmonError, KindMismatchError
from gridmon.model import ProducerKind
from gridmon.relq import QueryType, SelectQuery, TableRef, WhereExpr, ident_key
from gridmon.wire import tuple_to_json

log = logging.getLogger(__name__)

BATCH_MAX_TUPLES = 100
BATCH_MAX_DELAY_SEC = 0.2


@dataclass(frozen=True)
class ArchiverSpec:
    """What to collect and where to put it."""

    target_endpoint: str  # producer engine URL, any insertable kind
    tables: tuple[tuple[str, WhereExpr | None], ...]
    replay: bool = False

    def __post_init__(self):
        if not self.tables:
            raise ConfigError("an archiver archives at least one table")


@dataclass
class _Pipeline:
    table: str
    consumer: ConsumerEngine
    thread: threading.Thread | None = None
    archived: int = 0
    max_source_ts: int = 0
    insert_failures: int = 0
    lock: threading.Lock = field(default_factory=threading.Lock)


class ArchiverEngine:
    def __init__(
        self,
        spec: ArchiverSpec,
        registry: RegistryClient,
        consumer_endpoint_base: str,
        archiver_id: str | None = None,
        batch_max: int = BATCH_MAX_TUPLES,
        batch_delay: float = BATCH_MAX_DELAY_SEC,
        vector_insert: bool = True,
    ):
        self.spec = spec
        self.registry = registry
        self.consumer_endpoint_base = consumer_endpoint_base.rstrip("/")
        self.id = archiver_id or f"A{uuid.uuid4().hex[:10]}"
        self.batch_max = batch_max
        self.batch_delay = batch_delay
        self.vector_insert = vector_insert
        self.target = ProducerClient(spec.target_endpoint, timeout=10.0)
        self._pipelines: dict[str, _Pipeline] = {}
        self._stopped = threading.Event()
        self._lock = threading.Lock()
        self._final_counts: dict[str, int] | None = None

    # lifecycle

    def start(self) -> None:
        info = self.target.stats()
        kind = ProducerKind(info["kind"])
        if not kind.insertable:
            raise KindMismatchError("the archive target must be an insertable producer kind")
        target_tables = {ident_key(name) for name in info.get("tables", {})}
        for name, _ in self.spec.tables:
            if ident_key(name) not in target_tables:
                raise ConfigError(f"target does not declare archived table {name}")
        self.target.post("/own", {"token": self.id})

        for name, where in self.spec.tables:
            query = SelectQuery(None, (TableRef(name),), where)
            cid = f"C{uuid.uuid4().hex[:10]}"
            consumer = ConsumerEngine(
                query,
                QueryType.CONTINUOUS,
                registry=self.registry,
                consumer_id=cid,
                endpoint=f"{self.consumer_endpoint_base}/consumer/{cid}",
                replay=self.spec.replay,
                exclude_endpoints={self.spec.target_endpoint},
            )
            self._pipelines[ident_key(name)] = _Pipeline(name, consumer)

    def consumers(self) -> list[ConsumerEngine]:
        return [p.consumer for p in self._pipelines.values()]

    def run(self) -> None:
        """Start consumers and pipeline threads (consumers must already be
        reachable at their endpoints)."""
        for pipeline in self._pipelines.values():
            pipeline.consumer.start()
            thread = threading.Thread(
                target=self._pump, args=(pipeline,), name=f"archive-{pipeline.table}", daemon=True
            )
            pipeline.thread = thread
            thread.start()

    def _collect_batch(self, pipeline: _Pipeline) -> list[Tuple]:
        """Up to batch_max tuples or batch_delay seconds, whichever first."""
        deadline = time.monotonic() + self.batch_delay
        batch: list[Tuple] = []
        while len(batch) < self.batch_max:
            remaining = deadline - time.monotonic()
            if remaining <= 0:
                break
            got = pipeline.consumer.pop(self.batch_max - len(batch), timeout=remaining)
            if not got and not batch:
                deadline = time.monotonic() + self.batch_delay  # idle: keep waiting
                if self._stopped.is_set():
                    break
                continue
            batch.extend(got)
        return batch

    def _pump(self, pipeline: _Pipeline) -> None:
        while not self._stopped.is_set():
            batch = self._collect_batch(pipeline)
            if batch:
                self._reinsert(pipeline, batch)
        # final flush after stop: subscriptions are closed, take what is left
        leftovers = pipeline.consumer.drain()
        if leftovers:
            self._reinsert(pipeline, leftovers)

    def _reinsert(self, pipeline: _Pipeline, batch: list[Tuple]) -> None:
        groups = [batch] if self.vector_insert else [[t] for t in batch]
        for group in groups:
            payload = [tuple_to_json(t) for t in group]
            try:
                self.target.insert_tuples(pipeline.table, payload, owner_token=self.id)
            except GridmonError as exc:
                with pipeline.lock:
                    pipeline.insert_failures += 1
                log.warning("archive insert into %s failed: %s", pipeline.table, exc)
                continue
            with pipeline.lock:
                pipeline.archived += len(group)
                pipeline.max_source_ts = max(
                    [pipeline.max_source_ts] + [t.timestamp for t in group]
                )

    def stop(self) -> dict[str, int]:
        """Close subscriptions, flush in-flight tuples, release the target.
        Idempotent: repeated stops return the same counts."""
        with self._lock:
            if self._final_counts is not None:
                return dict(self._final_counts)
            self._stopped.set()
            for pipeline in self._pipelines.values():
                pipeline.consumer.stop()
            for pipeline in self._pipelines.values():
                if pipeline.thread is not None:
                    pipeline.thread.join(timeout=10.0)
            try:
                self.target.delete(f"/own/{self.id}")
            except GridmonError as exc:
                log.debug("ownership release failed: %s", exc)
            self._final_counts = {
                p.table: p.archived for p in self._pipelines.values()
            }
            self.target.close()
            return dict(self._final_counts)

    def stats(self) -> dict:
        now = now_ms()
        per_table = {}
        for pipeline in self._pipelines.values():
            with pipeline.lock:
                per_table[pipeline.table] = {
                    "archived": pipeline.archived,
                    "lagMs": (now - pipeline.max_source_ts) if pipeline.max_source_ts else None,
                    "insertFailures": pipeline.insert_failures,
                    "consumer": pipeline.consumer.stats(),
                }
        return {
            "id": self.id,
            "target": self.spec.target_endpoint,
            "stopped": self._stopped.is_set(),
            "tables": per_table,
        }
