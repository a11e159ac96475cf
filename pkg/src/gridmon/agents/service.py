"""The agent: one process hosting any mix of engines behind HTTP.

An agent can host the registry, producer engines, consumer engines and
archivers in any combination (co-location is free). It owns the heartbeat
scheduler for everything it hosts, and the pusher threads that drive
tuple streams from producer subscriptions to consumer sinks via
long-lived chunked POSTs.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid

import requests

from gridmon import wire
from gridmon.agents.client import RegistryClient, push_stream
from gridmon.agents.config import AgentConfig
from gridmon.agents.heartbeat import HeartbeatScheduler
from gridmon.agents.httpd import Request, Router, start_server
from gridmon.archiver import ArchiverEngine, ArchiverSpec
from gridmon.consumer import ConsumerEngine
from gridmon.core import TupleBatch, project
from gridmon.errors import (
    ConfigError,
    GridmonError,
    UnknownIdError,
    UnknownTableError,
    ValidationError,
)
from gridmon.model import ConsumerEntry, ProducerEntry, ProducerKind
from gridmon.producers import CleanupRule, ProducerConfig, ProducerEngine, Subscription, TableDecl
from gridmon.query_exec import projection_refs
from gridmon.registry import RegistryService
from gridmon.relq import (
    QueryType,
    parse_create_table,
    parse_insert,
    parse_select,
    parse_view_predicate,
    parse_where,
    unparse_create_table,
    unparse_view_predicate,
)
from gridmon.wire import tuple_from_json

log = logging.getLogger(__name__)

PUSH_BATCH = 500
PUSH_KEEPALIVE_SEC = 15.0
PUSH_FAILURE_LIMIT = 3
PUSH_RETRY_DELAY_SEC = 0.5


class SubscriptionPusher(threading.Thread):
    """Drives one subscription: pops tuples and streams canonical lines to
    the consumer sink, a keepalive comment on every 15 s of silence.

    A broken sink is retried; after 3 consecutive failures with no
    progress the subscription is garbage-collected.
    """

    def __init__(self, engine: ProducerEngine, sub: Subscription, producer_endpoint: str):
        super().__init__(name=f"push-{sub.id}", daemon=True)
        self.engine = engine
        self.sub = sub
        self.params = {
            "producer": engine.id,
            "subscription": sub.id,
            "table": sub.table.name,
            "endpoint": producer_endpoint,
        }
        self._made_progress = False

    def _chunks(self):
        while True:
            batch = self.sub.pop(PUSH_BATCH, timeout=PUSH_KEEPALIVE_SEC)
            if batch is None:
                return
            if not batch:
                yield wire.KEEPALIVE_LINE
                continue
            self._made_progress = True
            yield b"".join(wire.encode_tuple(t) for t in batch)

    def run(self) -> None:
        failures = 0
        while failures < PUSH_FAILURE_LIMIT:
            self._made_progress = False
            try:
                push_stream(self.sub.sink_endpoint, self._chunks(), self.params)
                return  # subscription closed, stream drained
            except Exception as exc:
                failures = 1 if self._made_progress else failures + 1
                if self.sub.closed:
                    return
                log.warning("push to %s failed (%d): %s", self.sub.sink_endpoint, failures, exc)
                time.sleep(PUSH_RETRY_DELAY_SEC)
        log.warning("sink %s unreachable, dropping subscription %s",
                    self.sub.sink_endpoint, self.sub.id)
        try:
            self.engine.unsubscribe(self.sub.id)
        except UnknownIdError:
            pass


class _HostedProducer:
    def __init__(self, engine: ProducerEngine):
        self.engine = engine
        self.registrations: list[ProducerEntry] = []
        self.ddl: dict[str, str] = {}
        self.pushers: dict[str, SubscriptionPusher] = {}
        self.request_counts = {"insert": 0, "query": 0, "subscribe": 0}


class Agent:
    def __init__(
        self,
        config: AgentConfig | None = None,
        host_registry: bool = False,
        registry_service: RegistryService | None = None,
    ):
        self.config = config or AgentConfig()
        self.id = f"agent-{uuid.uuid4().hex[:8]}"
        self.base_url = ""
        self.registry_service = registry_service
        self._host_registry = host_registry or registry_service is not None
        if self._host_registry and self.registry_service is None:
            self.registry_service = RegistryService(deliver=self._deliver_notification)
        self.registry_client: RegistryClient | None = None
        self.heartbeats: HeartbeatScheduler | None = None
        self._server = None
        self._producers: dict[str, _HostedProducer] = {}
        self._consumers: dict[str, ConsumerEngine] = {}
        self._archivers: dict[str, ArchiverEngine] = {}
        self._lock = threading.RLock()
        self._sweeper: threading.Thread | None = None
        self._stopping = threading.Event()
        self.router = Router()
        self._routes()

    # lifecycle

    def start(self) -> "Agent":
        self._server, _, self.base_url = start_server(
            self.router, self.config.listen_host, self.config.listen_port
        )
        registry_url = self.config.registry_url or (self.base_url if self._host_registry else "")
        if not registry_url:
            raise ConfigError("an agent needs a registry URL unless it hosts the registry")
        self.registry_client = RegistryClient(registry_url, timeout=self.config.request_timeout)
        self.heartbeats = HeartbeatScheduler(self.registry_client, self.config.heartbeat_fraction)
        self.heartbeats.start()
        if self.registry_service is not None:
            self._sweeper = threading.Thread(target=self._sweep_loop, name="sweeper", daemon=True)
            self._sweeper.start()
        return self

    def _sweep_loop(self) -> None:
        while not self._stopping.wait(5.0):
            try:
                self.registry_service.sweep()
            except Exception:
                log.exception("sweep failed")

    def stop(self) -> None:
        self._stopping.set()
        if self.heartbeats is not None:
            self.heartbeats.stop()
        with self._lock:
            archivers = list(self._archivers.values())
            consumers = list(self._consumers.values())
            producers = list(self._producers.values())
            self._archivers.clear()
            self._consumers.clear()
            self._producers.clear()
        for archiver in archivers:
            archiver.stop()
        for consumer in consumers:
            consumer.stop(unregister=False)
        for hosted in producers:
            hosted.engine.close()
        if self.registry_service is not None:
            self.registry_service.stop()
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
        if self.registry_client is not None:
            self.registry_client.close()

    def _deliver_notification(self, consumer: ConsumerEntry, producer: ProducerEntry) -> bool:
        response = requests.post(
            f"{consumer.endpoint}/notify", json=producer.to_json(), timeout=3.0
        )
        return response.status_code == 200

    # routing table

    def _routes(self) -> None:
        r = self.router
        r.add("GET", "/health", self._health)
        r.add("GET", "/tables", self._tables_proxy)
        r.add("GET", "/tables/{name}", self._table_proxy)

        r.add("POST", "/registry/tables", self._reg_create_table)
        r.add("GET", "/registry/tables", self._reg_list_tables)
        r.add("GET", "/registry/tables/{name}", self._reg_get_table)
        r.add("POST", "/registry/producers", self._reg_register_producer)
        r.add("GET", "/registry/producers", self._reg_lookup)
        r.add("DELETE", "/registry/producers/{id}", self._reg_unregister)
        r.add("POST", "/registry/consumers", self._reg_register_consumer)
        r.add("DELETE", "/registry/consumers/{id}", self._reg_unregister)
        r.add("POST", "/registry/heartbeat", self._reg_heartbeat)
        r.add("GET", "/registry/stats", self._reg_stats)

        r.add("POST", "/producer", self._producer_create)
        r.add("POST", "/producer/{id}/insert", self._producer_insert)
        r.add("POST", "/producer/{id}/query", self._producer_query)
        r.add("POST", "/producer/{id}/subscribe", self._producer_subscribe)
        r.add("DELETE", "/producer/{id}/subscribe/{sid}", self._producer_unsubscribe)
        r.add("POST", "/producer/{id}/own", self._producer_own)
        r.add("DELETE", "/producer/{id}/own/{token}", self._producer_disown)
        r.add("GET", "/producer/{id}/stats", self._producer_stats)
        r.add("DELETE", "/producer/{id}", self._producer_delete)

        r.add("POST", "/consumer", self._consumer_create)
        r.add("GET", "/consumer/{id}/pop", self._consumer_pop)
        r.add("POST", "/consumer/{id}/notify", self._consumer_notify)
        r.add("POST", "/consumer/{id}/push", self._consumer_push)
        r.add("GET", "/consumer/{id}/stats", self._consumer_stats)
        r.add("DELETE", "/consumer/{id}", self._consumer_delete)

        r.add("POST", "/archiver", self._archiver_create)
        r.add("GET", "/archiver/{id}/stats", self._archiver_stats)
        r.add("DELETE", "/archiver/{id}", self._archiver_delete)

    # agent-level

    def _health(self, request: Request) -> dict:
        return {
            "ok": True,
            "agentId": self.id,
            "baseUrl": self.base_url,
            "hostsRegistry": self.registry_service is not None,
        }

    def _tables_proxy(self, request: Request) -> dict:
        return {"tables": self.registry_client.list_tables()}

    def _table_proxy(self, request: Request) -> dict:
        return self.registry_client.get(f"/registry/tables/{request.params['name']}")

    # registry endpoints

    def _registry(self) -> RegistryService:
        if self.registry_service is None:
            raise UnknownIdError("this agent does not host the registry")
        return self.registry_service

    def _reg_create_table(self, request: Request) -> dict:
        body = request.json()
        table = parse_create_table(body["ddl"])
        entry = self._registry().create_table(table)
        return {"table": entry.table.name, "createdAt": entry.created_at}

    def _table_json(self, entry) -> dict:
        table = entry.table
        return {
            "name": table.name,
            "ddl": unparse_create_table(table),
            "columns": [{"name": c.name, "type": str(c.type)} for c in table.columns],
            "definingFields": list(table.defining_fields),
            "createdAt": entry.created_at,
        }

    def _reg_list_tables(self, request: Request) -> dict:
        return {"tables": [self._table_json(e) for e in self._registry().schema_entries()]}

    def _reg_get_table(self, request: Request) -> dict:
        return self._table_json(self._registry().schema_entry(request.params["name"]))

    def _reg_register_producer(self, request: Request) -> dict:
        body = request.json()
        entry = self._registry().register_producer(
            endpoint=body["endpoint"],
            table=body["table"],
            view=parse_view_predicate(body.get("view", "")),
            kind=ProducerKind(body["kind"]),
            interval_sec=int(body["terminationIntervalSec"]),
            producer_id=body.get("producerId"),
        )
        return entry.to_json()

    def _reg_register_consumer(self, request: Request) -> dict:
        body = request.json()
        entry, producers = self._registry().register_consumer(
            endpoint=body["endpoint"],
            query=parse_select(body["query"]),
            query_type=QueryType(body["queryType"]),
            interval_sec=int(body["terminationIntervalSec"]),
            consumer_id=body.get("consumerId"),
        )
        return {"consumer": entry.to_json(), "producers": [p.to_json() for p in producers]}

    def _reg_heartbeat(self, request: Request) -> dict:
        body = request.json()
        return {"terminationTime": self._registry().heartbeat(body["id"])}

    def _reg_lookup(self, request: Request) -> dict:
        table = request.query.get("table", "")
        query_type = QueryType(request.query.get("type", "history"))
        where_text = request.query.get("where", "")
        where = parse_where(where_text) if where_text else None
        aliases = {a for a in request.query.get("aliases", "").split(",") if a}
        entries = self._registry().lookup(table, query_type, where, aliases or None)
        return {"producers": [e.to_json() for e in entries]}

    def _reg_unregister(self, request: Request) -> dict:
        self._registry().unregister(request.params["id"])
        return {}

    def _reg_stats(self, request: Request) -> dict:
        return self._registry().counts()

    # producer endpoints

    def _hosted(self, producer_id: str) -> _HostedProducer:
        with self._lock:
            hosted = self._producers.get(producer_id)
        if hosted is None:
            raise UnknownIdError(f"no producer {producer_id} on this agent")
        return hosted

    def _producer_create(self, request: Request) -> dict:
        body = request.json()
        kind = ProducerKind(body["kind"])
        interval = int(body.get("terminationIntervalSec", 60))
        declarations = []
        ddl_by_table = {}
        for spec in body.get("tables", []):
            if "ddl" in spec:
                table = parse_create_table(spec["ddl"])
                self.registry_client.create_table(spec["ddl"])
            elif "table" in spec:
                table = self.registry_client.get_table(spec["table"])
            else:
                raise ValidationError("each table spec needs 'ddl' or 'table'")
            view = parse_view_predicate(spec.get("view", ""))
            cleanup = None
            if "cleanup" in spec:
                cleanup = CleanupRule(
                    where=parse_where(spec["cleanup"]["where"]),
                    interval_sec=int(spec["cleanup"]["intervalSec"]),
                )
            declarations.append(TableDecl(table, view, cleanup))
            ddl_by_table[table.name] = unparse_create_table(table)
        if not declarations:
            raise ValidationError("a producer declares at least one table")

        config = ProducerConfig(
            kind=kind,
            declarations=tuple(declarations),
            termination_interval_sec=interval,
            stream_buffer_capacity=int(body.get("streamBufferCapacity", 10_000)),
            resilient_log_path=body.get("resilientLogPath"),
            replay_window_size=int(body.get("replayWindowSize", 10_000)),
        )
        engine = ProducerEngine(config)
        hosted = _HostedProducer(engine)
        hosted.ddl = ddl_by_table
        endpoint = f"{self.base_url}/producer/{engine.id}"

        if "handlerTuples" in body:  # static on-demand fixture
            default_table = declarations[0].table.name
            fixed = [
                tuple_from_json(obj, engine.declaration(obj.get("table", default_table)).table)
                for obj in body["handlerTuples"]
            ]
            engine.register_canonical(lambda query: list(fixed))

        # visible for routing before the registry announces it: notified
        # consumers may subscribe immediately
        with self._lock:
            self._producers[engine.id] = hosted
        try:
            for decl in declarations:
                entry = self.registry_client.register_producer(
                    endpoint=endpoint,
                    table=decl.table.name,
                    view=unparse_view_predicate(decl.view),
                    kind=kind,
                    interval_sec=interval,
                )
                hosted.registrations.append(entry)
        except GridmonError:
            with self._lock:
                self._producers.pop(engine.id, None)
            engine.close()
            raise
        for entry in hosted.registrations:
            self._watch_producer_entry(hosted, entry, interval)
        return {
            "id": engine.id,
            "endpoint": endpoint,
            "registrations": [e.to_json() for e in hosted.registrations],
        }

    def _watch_producer_entry(self, hosted: _HostedProducer, entry: ProducerEntry, interval: int) -> None:
        def reregister() -> None:
            try:
                self.registry_client.register_producer(
                    endpoint=entry.endpoint,
                    table=entry.table,
                    view=unparse_view_predicate(entry.view),
                    kind=entry.kind,
                    interval_sec=interval,
                    producer_id=entry.producer_id,
                )
            except UnknownTableError:
                self.registry_client.create_table(hosted.ddl[entry.table])
                self.registry_client.register_producer(
                    endpoint=entry.endpoint,
                    table=entry.table,
                    view=unparse_view_predicate(entry.view),
                    kind=entry.kind,
                    interval_sec=interval,
                    producer_id=entry.producer_id,
                )

        self.heartbeats.add(entry.producer_id, interval, reregister)

    def _producer_insert(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        hosted.request_counts["insert"] += 1
        body = request.json()
        owner = body.get("ownerToken")
        if "sql" in body:
            accepted = hosted.engine.insert_sql(parse_insert(body["sql"]), owner_token=owner)
        else:
            table = hosted.engine.declaration(body["table"]).table
            tuples = tuple(tuple_from_json(obj, table) for obj in body.get("tuples", []))
            accepted = hosted.engine.insert(
                TupleBatch(table.name, tuples), owner_token=owner
            )
        return {"accepted": accepted}

    def _producer_query(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        hosted.request_counts["query"] += 1
        body = request.json()
        query = parse_select(body["sql"])
        result = hosted.engine.answer_query(query, QueryType(body["type"]))
        return result.to_json()

    def _producer_subscribe(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        hosted.request_counts["subscribe"] += 1
        body = request.json()
        where = parse_where(body["where"]) if body.get("where") else None
        sub = hosted.engine.subscribe(
            sink_endpoint=body["sink"],
            table=body.get("table"),
            where=where,
            replay=bool(body.get("replay", False)),
        )
        pusher = SubscriptionPusher(
            hosted.engine, sub, f"{self.base_url}/producer/{hosted.engine.id}"
        )
        hosted.pushers[sub.id] = pusher
        pusher.start()
        return {"subscriptionId": sub.id}

    def _producer_unsubscribe(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        hosted.engine.unsubscribe(request.params["sid"])
        hosted.pushers.pop(request.params["sid"], None)
        return {}

    def _producer_own(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        hosted.engine.acquire(request.json()["token"])
        return {}

    def _producer_disown(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        hosted.engine.release(request.params["token"])
        return {}

    def _producer_stats(self, request: Request) -> dict:
        hosted = self._hosted(request.params["id"])
        stats = hosted.engine.stats()
        stats["requestCounts"] = dict(hosted.request_counts)
        stats["registrations"] = [e.to_json() for e in hosted.registrations]
        return stats

    def _producer_delete(self, request: Request) -> dict:
        with self._lock:
            hosted = self._producers.pop(request.params["id"], None)
        if hosted is None:
            raise UnknownIdError(f"no producer {request.params['id']} on this agent")
        for entry in hosted.registrations:
            self.heartbeats.remove(entry.producer_id)
            try:
                self.registry_client.unregister_producer(entry.producer_id)
            except GridmonError:
                pass
        hosted.engine.close()
        return {}

    # consumer endpoints

    def _consumer_engine(self, consumer_id: str) -> ConsumerEngine:
        with self._lock:
            engine = self._consumers.get(consumer_id)
        if engine is None:
            raise UnknownIdError(f"no consumer {consumer_id} on this agent")
        return engine

    def _consumer_create(self, request: Request) -> dict:
        body = request.json()
        query_type = QueryType(body["type"])
        interval = int(body.get("terminationIntervalSec", 60))
        if query_type in (QueryType.HISTORY, QueryType.LATEST):
            engine = ConsumerEngine(
                body["sql"],
                query_type,
                registry=self.registry_client,
                target_timeout=self.config.request_timeout,
            )
            result, reports = engine.run_once()
            payload = result.to_json()
            payload["targets"] = [r.to_json() for r in reports]
            return {"id": engine.id, "result": payload}

        cid = f"C{uuid.uuid4().hex[:10]}"
        engine = ConsumerEngine(
            body["sql"],
            query_type,
            registry=self.registry_client,
            consumer_id=cid,
            endpoint=f"{self.base_url}/consumer/{cid}",
            interval_sec=interval,
            replay=bool(body.get("replay", False)),
            buffer_capacity=int(body.get("popBufferCapacity", 10_000)),
            target_timeout=self.config.request_timeout,
        )
        with self._lock:
            self._consumers[cid] = engine
        try:
            engine.start()
        except GridmonError:
            with self._lock:
                self._consumers.pop(cid, None)
            raise
        # heartbeats double as the notification fallback: each beat re-polls
        # the registry for stream targets this consumer is missing
        self.heartbeats.add(cid, interval, engine.reregister, on_beat=engine.refresh_targets)
        return {"id": cid, "endpoint": engine.endpoint}

    def _consumer_pop(self, request: Request) -> dict:
        engine = self._consumer_engine(request.params["id"])
        max_tuples = int(request.query.get("max", 1000))
        timeout = int(request.query.get("timeoutMs", 0)) / 1000.0
        tuples = engine.pop(max_tuples, timeout)
        table = engine.sole_table
        rows = [project(t, engine.query.projection, table) for t in tuples]
        columns = [str(r) for r in projection_refs(engine.query, [table])]
        return {"columns": columns, "rows": rows}

    def _consumer_notify(self, request: Request) -> dict:
        engine = self._consumer_engine(request.params["id"])
        entry = ProducerEntry.from_json(request.json())
        return {"subscribed": engine.handle_notification(entry)}

    def _consumer_push(self, request: Request) -> dict:
        engine = self._consumer_engine(request.params["id"])
        received = engine.ingest_lines(request.iter_lines())
        return {"received": received}

    def _consumer_stats(self, request: Request) -> dict:
        return self._consumer_engine(request.params["id"]).stats()

    def _consumer_delete(self, request: Request) -> dict:
        with self._lock:
            engine = self._consumers.pop(request.params["id"], None)
        if engine is None:
            raise UnknownIdError(f"no consumer {request.params['id']} on this agent")
        self.heartbeats.remove(engine.id)
        engine.stop()
        return {}

    # archiver endpoints

    def _archiver_create(self, request: Request) -> dict:
        body = request.json()
        target = body["target"]
        if not target.startswith("http"):
            target = f"{self.base_url}/producer/{target}"
        tables = tuple(
            (spec["table"], parse_where(spec["where"]) if spec.get("where") else None)
            for spec in body.get("tables", [])
        )
        spec = ArchiverSpec(
            target_endpoint=target, tables=tables, replay=bool(body.get("replay", False))
        )
        engine = ArchiverEngine(
            spec,
            registry=self.registry_client,
            consumer_endpoint_base=self.base_url,
            batch_max=int(body.get("batchMaxTuples", 100)),
            batch_delay=int(body.get("batchMaxDelayMs", 200)) / 1000.0,
            vector_insert=bool(body.get("vectorInsert", True)),
        )
        engine.start()
        with self._lock:
            self._archivers[engine.id] = engine
            for consumer in engine.consumers():
                self._consumers[consumer.id] = consumer
        engine.run()
        for consumer in engine.consumers():
            self.heartbeats.add(
                consumer.id, consumer.interval_sec, consumer.reregister,
                on_beat=consumer.refresh_targets,
            )
        return {"id": engine.id}

    def _archiver_stats(self, request: Request) -> dict:
        with self._lock:
            engine = self._archivers.get(request.params["id"])
        if engine is None:
            raise UnknownIdError(f"no archiver {request.params['id']} on this agent")
        return engine.stats()

    def _archiver_delete(self, request: Request) -> dict:
        with self._lock:
            engine = self._archivers.pop(request.params["id"], None)
        if engine is None:
            raise UnknownIdError(f"no archiver {request.params['id']} on this agent")
        counts = engine.stop()
        with self._lock:
            for consumer in engine.consumers():
                self._consumers.pop(consumer.id, None)
                self.heartbeats.remove(consumer.id)
        return {"flushed": counts}
