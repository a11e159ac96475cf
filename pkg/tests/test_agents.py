"""End-to-end flows through the HTTP agents."""

import time

import pytest

from conftest import wait_until
from gridmon.agents import Agent, AgentConfig
from gridmon.agents.client import HttpClient, ProducerClient, RegistryClient
from gridmon.errors import OwnershipError, ParseError, UnknownTableError
from gridmon.relq import QueryType

CPU_DDL = (
    "CREATE TABLE CpuLoad (host STRING(64), site STRING(64), load1 REAL, PRIMARY KEY (host))"
)


def make_producer(agent, kind="STREAM", ddl=CPU_DDL, view="", **extra):
    client = HttpClient(agent.base_url)
    body = {"kind": kind, "tables": [{"ddl": ddl, "view": view}], **extra}
    created = client.post("/producer", body)
    client.close()
    return created["id"], ProducerClient(created["endpoint"])


def start_consumer(agent, sql, qtype="continuous", **extra):
    client = HttpClient(agent.base_url)
    created = client.post("/consumer", {"sql": sql, "type": qtype, **extra})
    client.close()
    return created


def pop(agent, cid, max_tuples=100, timeout_ms=2000):
    client = HttpClient(agent.base_url, timeout=timeout_ms / 1000 + 5)
    try:
        return client.get(
            f"/consumer/{cid}/pop", params={"max": max_tuples, "timeoutMs": timeout_ms}
        )
    finally:
        client.close()


def collect_rows(agent, cid, expected, timeout=10.0):
    rows = []
    deadline = time.monotonic() + timeout
    while len(rows) < expected and time.monotonic() < deadline:
        rows.extend(pop(agent, cid, timeout_ms=500)["rows"])
    return rows


def insert(producer, host, load, site="RAL", ts=None):
    ts_part = f", {ts}" if ts is not None else ""
    cols = "(host, site, load1" + (", RgmaTimestamp)" if ts is not None else ")")
    return producer.insert_sql(
        f"INSERT INTO CpuLoad {cols} VALUES ('{host}', '{site}', {load}{ts_part})"
    )


def test_health_and_table_listing(registry_agent, node_agent):
    health = HttpClient(node_agent.base_url).get("/health")
    assert health["ok"] and not health["hostsRegistry"]
    registry = RegistryClient(registry_agent.base_url)
    registry.create_table(CPU_DDL)
    tables = HttpClient(node_agent.base_url).get("/tables")["tables"]
    assert [t["name"] for t in tables] == ["CpuLoad"]
    described = HttpClient(node_agent.base_url).get("/tables/CpuLoad")
    assert described["definingFields"] == ["host"]
    assert described["ddl"] == CPU_DDL


def test_continuous_flow_insert_then_pop(registry_agent, node_agent):
    _, producer = make_producer(node_agent)
    consumer = start_consumer(node_agent, "SELECT * FROM CpuLoad WHERE load1 > 0.5")
    insert(producer, "n1", 0.9, ts=100)
    insert(producer, "n2", 0.1, ts=101)  # filtered out
    insert(producer, "n3", 0.7, ts=102)
    got = collect_rows(node_agent, consumer["id"], expected=2)
    assert [r[0] for r in got] == ["n1", "n3"]
    assert [r[3] for r in got] == [100, 102]


def test_notification_subscribes_midstream(registry_agent, node_agent):
    RegistryClient(registry_agent.base_url).create_table(CPU_DDL)
    consumer = start_consumer(node_agent, "SELECT * FROM CpuLoad")
    _, producer = make_producer(node_agent)  # registered after the query started

    def subscribed():
        stats = producer.stats()
        return len(stats["subscriptions"]) == 1

    wait_until(subscribed, message="notification-driven subscription")
    insert(producer, "n1", 0.5, ts=7)
    rows = collect_rows(node_agent, consumer["id"], expected=1)
    assert rows and rows[0][:2] == ["n1", "RAL"]


def test_duplicate_notification_is_idempotent(registry_agent, node_agent):
    _, producer = make_producer(node_agent)
    consumer = start_consumer(node_agent, "SELECT * FROM CpuLoad")
    wait_until(lambda: len(producer.stats()["subscriptions"]) == 1, message="subscription")
    entry = producer.stats()["registrations"][0]
    client = HttpClient(node_agent.base_url)
    outcome = client.post(f"/consumer/{consumer['id']}/notify", entry)
    assert outcome == {"subscribed": False}
    assert len(producer.stats()["subscriptions"]) == 1


def test_history_query_across_producers(registry_agent, node_agent):
    _, db1 = make_producer(node_agent, kind="DATABASE")
    _, db2 = make_producer(node_agent, kind="DATABASE")
    insert(db1, "n1", 0.5, ts=1)
    insert(db1, "n2", 0.6, ts=2)
    insert(db2, "n1", 0.5, ts=1)
    outcome = start_consumer(node_agent, "SELECT host FROM CpuLoad", qtype="history")
    rows = sorted(outcome["result"]["rows"])
    assert rows == [["n1"], ["n1"], ["n2"]]  # duplicates preserved
    assert outcome["result"]["warnings"] == []
    assert all(t["ok"] for t in outcome["result"]["targets"])


def test_latest_query_merges_across_producers(registry_agent, node_agent):
    _, lp1 = make_producer(node_agent, kind="LATEST")
    _, lp2 = make_producer(node_agent, kind="LATEST")
    insert(lp1, "n1", 0.1, ts=10)
    insert(lp2, "n1", 0.9, ts=20)
    outcome = start_consumer(node_agent, "SELECT * FROM CpuLoad", qtype="latest")
    assert outcome["result"]["rows"] == [["n1", "RAL", 0.9, 20]]


def test_latest_query_merges_then_filters(registry_agent, node_agent):
    _, lp1 = make_producer(node_agent, kind="LATEST")
    _, lp2 = make_producer(node_agent, kind="LATEST")
    insert(lp1, "n1", 0.9, ts=10)   # old high reading, superseded elsewhere
    insert(lp2, "n1", 0.4, ts=20)
    outcome = start_consumer(
        node_agent, "SELECT * FROM CpuLoad WHERE load1 > 0.5", qtype="latest"
    )
    # merge first: current value (0.4) fails the filter, stale 0.9 must not leak
    assert outcome["result"]["rows"] == []


def test_canonical_fixture_serves_history_and_latest(registry_agent, node_agent):
    _, producer = make_producer(
        node_agent,
        kind="CANONICAL",
        handlerTuples=[
            {"table": "CpuLoad", "host": "n1", "site": "RAL", "load1": 0.5, "RgmaTimestamp": 5}
        ],
    )
    for qtype in ("history", "latest"):
        outcome = start_consumer(node_agent, "SELECT host FROM CpuLoad", qtype=qtype)
        assert outcome["result"]["rows"] == [["n1"]]


def test_join_query_round_trip(registry_agent, node_agent):
    service_ddl = "CREATE TABLE Service (uri STRING(255), type STRING(64), site STRING(64), PRIMARY KEY (uri))"
    status_ddl = "CREATE TABLE ServiceStatus (uri STRING(255), status STRING(32), PRIMARY KEY (uri))"
    client = HttpClient(node_agent.base_url)
    created = client.post(
        "/producer",
        {"kind": "DATABASE", "tables": [{"ddl": service_ddl}, {"ddl": status_ddl}]},
    )
    producer = ProducerClient(created["endpoint"])
    producer.insert_sql(
        "INSERT INTO Service (uri, type, site) VALUES ('u1', 'se', 'RAL'), ('u2', 'ce', 'RAL')"
    )
    producer.insert_sql(
        "INSERT INTO ServiceStatus (uri, status) VALUES ('u1', 'ok'), ('u2', 'down')"
    )
    outcome = start_consumer(
        node_agent,
        "SELECT s.uri, st.status FROM Service s, ServiceStatus st WHERE s.uri = st.uri",
        qtype="history",
    )
    assert outcome["result"]["columns"] == ["s.uri", "st.status"]
    assert sorted(outcome["result"]["rows"]) == [["u1", "ok"], ["u2", "down"]]


def test_resilient_replay_subscription(registry_agent, node_agent, tmp_path):
    log_path = str(tmp_path / "resilient.log")
    _, producer = make_producer(node_agent, kind="RESILIENT_STREAM", resilientLogPath=log_path)
    insert(producer, "n1", 0.5, ts=1)
    insert(producer, "n2", 0.6, ts=2)
    consumer = start_consumer(node_agent, "SELECT * FROM CpuLoad", replay=True)
    rows = collect_rows(node_agent, consumer["id"], expected=2)
    assert [r[0] for r in rows] == ["n1", "n2"]


def test_parse_error_maps_to_400_with_type(registry_agent, node_agent):
    with pytest.raises(ParseError):
        start_consumer(node_agent, "SELEKT * FROM T", qtype="history")


def test_unknown_table_maps_to_404(registry_agent, node_agent):
    with pytest.raises(UnknownTableError):
        start_consumer(node_agent, "SELECT * FROM Nowhere", qtype="history")


def test_ownership_via_http(registry_agent, node_agent):
    pid, producer = make_producer(node_agent, kind="LATEST")
    producer.post("/own", {"token": "arch-1"})
    with pytest.raises(OwnershipError):
        insert(producer, "n1", 0.5)
    producer.insert_tuples(
        "CpuLoad",
        [{"table": "CpuLoad", "host": "n1", "site": "RAL", "load1": 0.5, "RgmaTimestamp": 9}],
        owner_token="arch-1",
    )
    producer.delete("/own/arch-1")
    assert insert(producer, "n2", 0.4) == 1


def test_producer_delete_unregisters(registry_agent, node_agent):
    pid, producer = make_producer(node_agent)
    registry = RegistryClient(registry_agent.base_url)
    assert len(registry.lookup("CpuLoad", QueryType.CONTINUOUS)) == 1
    HttpClient(node_agent.base_url).delete(f"/producer/{pid}")
    assert registry.lookup("CpuLoad", QueryType.CONTINUOUS) == []


def test_consumer_delete_closes_subscription(registry_agent, node_agent):
    _, producer = make_producer(node_agent)
    consumer = start_consumer(node_agent, "SELECT * FROM CpuLoad")
    wait_until(lambda: len(producer.stats()["subscriptions"]) == 1, message="subscription")
    HttpClient(node_agent.base_url).delete(f"/consumer/{consumer['id']}")
    wait_until(
        lambda: len(producer.stats()["subscriptions"]) == 0,
        message="subscription closed on consumer delete",
    )


def test_pop_timeout_on_silent_stream(registry_agent, node_agent):
    _, producer = make_producer(node_agent)
    consumer = start_consumer(node_agent, "SELECT * FROM CpuLoad")
    started = time.monotonic()
    result = pop(node_agent, consumer["id"], timeout_ms=100)
    elapsed = time.monotonic() - started
    assert result["rows"] == []
    assert 0.05 <= elapsed < 2.0


def test_vector_insert_over_http(registry_agent, node_agent):
    _, producer = make_producer(node_agent, kind="DATABASE")
    accepted = producer.insert_sql(
        "INSERT INTO CpuLoad (host, site, load1, RgmaTimestamp) "
        "VALUES ('n1', 'RAL', 0.1, 1), ('n2', 'RAL', 0.2, 2)"
    )
    assert accepted == 2
    outcome = start_consumer(node_agent, "SELECT host FROM CpuLoad", qtype="history")
    assert sorted(outcome["result"]["rows"]) == [["n1"], ["n2"]]


def test_heartbeats_keep_producer_alive(registry_agent):
    agent = Agent(AgentConfig(registry_url=registry_agent.base_url)).start()
    try:
        make_producer(agent, terminationIntervalSec=1)
        registry = RegistryClient(registry_agent.base_url)
        time.sleep(3.2)  # several termination intervals
        assert len(registry.lookup("CpuLoad", QueryType.CONTINUOUS)) == 1
    finally:
        agent.stop()


def test_stopped_agent_expires_from_registry(registry_agent):
    agent = Agent(AgentConfig(registry_url=registry_agent.base_url)).start()
    make_producer(agent, terminationIntervalSec=1)
    registry = RegistryClient(registry_agent.base_url)
    assert len(registry.lookup("CpuLoad", QueryType.CONTINUOUS)) == 1
    agent.stop()  # heartbeats cease
    wait_until(
        lambda: registry.lookup("CpuLoad", QueryType.CONTINUOUS) == [],
        timeout=5.0,
        message="expiry after heartbeats stop",
    )


def test_subscription_gc_after_repeated_push_failures(registry_agent, node_agent):
    _, producer = make_producer(node_agent)
    # a sink nobody listens on: the pusher must give up after 3 attempts
    producer.subscribe(sink="http://127.0.0.1:9/consumer/ghost/push")
    assert len(producer.stats()["subscriptions"]) == 1
    wait_until(
        lambda: producer.stats()["subscriptions"] == [],
        timeout=15.0,
        message="subscription garbage-collected after push failures",
    )


def test_lookup_poll_fallback_covers_dropped_notifications(registry_agent, node_agent):
    # consumer heartbeats every 0.5 s (interval 1 s); kill the notification
    # path entirely and the beat-time registry poll must still find the
    # producer
    registry_agent.registry_service.notifier = None
    try:
        RegistryClient(registry_agent.base_url).create_table(CPU_DDL)
        consumer = start_consumer(
            node_agent, "SELECT * FROM CpuLoad", terminationIntervalSec=1
        )
        _, producer = make_producer(node_agent)
        wait_until(
            lambda: len(producer.stats()["subscriptions"]) == 1,
            timeout=5.0,
            message="poll-fallback subscription",
        )
        insert(producer, "n1", 0.5, ts=4)
        rows = collect_rows(node_agent, consumer["id"], expected=1)
        assert rows and rows[0][0] == "n1"
    finally:
        from gridmon.registry import Notifier

        registry_agent.registry_service.notifier = Notifier(
            registry_agent._deliver_notification
        )


def test_registry_wipe_recovery(registry_agent, node_agent):
    _, producer = make_producer(node_agent, terminationIntervalSec=2)
    consumer = start_consumer(
        node_agent, "SELECT * FROM CpuLoad", terminationIntervalSec=2
    )
    wait_until(lambda: len(producer.stats()["subscriptions"]) == 1, message="subscription")

    # wipe: swap in a fresh empty registry service behind the same URL
    from gridmon.registry import RegistryService

    old = registry_agent.registry_service
    registry_agent.registry_service = RegistryService(
        deliver=registry_agent._deliver_notification
    )
    old.stop()

    registry = RegistryClient(registry_agent.base_url)

    def producer_back():
        try:
            return len(registry.lookup("CpuLoad", QueryType.CONTINUOUS)) == 1
        except UnknownTableError:
            return False  # table not yet re-created by a re-registering client

    wait_until(producer_back, timeout=4.0, message="producer re-registered after wipe")
    wait_until(
        lambda: registry_agent.registry_service.counts()["consumers"] == 1,
        timeout=4.0,
        message="consumer re-registered after wipe",
    )
    # stream still delivers
    insert(producer, "n9", 0.9, ts=999)
    rows = collect_rows(node_agent, consumer["id"], expected=1)
    assert rows and rows[0][0] == "n9"
