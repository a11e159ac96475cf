import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmon import relq
from gridmon.core import Tuple, TupleBatch
from gridmon.errors import (
    ConfigError,
    KindMismatchError,
    OwnershipError,
    UnknownIdError,
    ValidationError,
    ViewViolationError,
)
from gridmon.model import ProducerKind
from gridmon.producers import CleanupRule, ProducerConfig, ProducerEngine, TableDecl
from gridmon.relq import QueryType
from oracles import naive_eval, naive_latest

CPU = relq.parse_create_table(
    "CREATE TABLE CpuLoad (host STRING(64), site STRING(64), load1 REAL, PRIMARY KEY (host))"
)
SERVICE = relq.parse_create_table(
    "CREATE TABLE Service (uri STRING(255), type STRING(64), site STRING(64), PRIMARY KEY (uri))"
)
STATUS = relq.parse_create_table(
    "CREATE TABLE ServiceStatus (uri STRING(255), status STRING(32), PRIMARY KEY (uri))"
)


def cpu(host, load, ts, site="RAL"):
    return Tuple("CpuLoad", {"host": host, "site": site, "load1": load}, ts)


def batch(*tuples):
    return TupleBatch(tuples[0].table, tuples)


def engine(kind, table=CPU, view="", **kwargs):
    config = ProducerConfig.single(kind, table, relq.parse_view_predicate(view), **kwargs)
    return ProducerEngine(config)


# latest semantics


def test_latest_insert_replaces_newer():
    e = engine(ProducerKind.LATEST)
    e.insert(batch(cpu("n1", 0.1, 10)))
    e.insert(batch(cpu("n1", 0.9, 20)))
    assert e.store_rows("CpuLoad") == [cpu("n1", 0.9, 20)]


def test_latest_insert_keeps_newer_counts_superseded():
    e = engine(ProducerKind.LATEST)
    e.insert(batch(cpu("n1", 0.9, 20)))
    accepted = e.insert(batch(cpu("n1", 0.1, 10)))
    assert accepted == 1  # processed but superseded
    assert e.store_rows("CpuLoad") == [cpu("n1", 0.9, 20)]
    assert e.stats()["supersededTuples"] == 1


def test_latest_equal_timestamp_replaces():
    e = engine(ProducerKind.LATEST)
    e.insert(batch(cpu("n1", 0.1, 10)))
    e.insert(batch(cpu("n1", 0.2, 10)))
    assert e.store_rows("CpuLoad") == [cpu("n1", 0.2, 10)]


@settings(max_examples=200, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 8), st.integers(0, 30), st.integers(1, 3)),
        max_size=80,
    )
)
def test_latest_store_equals_merge_oracle(moves):
    e = engine(ProducerKind.LATEST)
    rows = []
    i = 0
    while i < len(moves):
        # random vector sizes exercise batch atomicity too
        group = moves[i : i + moves[i][2]]
        i += len(group)
        tuples = [cpu(f"n{h}", float(len(rows) + j), ts) for j, (h, ts, _) in enumerate(group)]
        rows.extend(dict(t.values, RgmaTimestamp=t.timestamp) for t in tuples)
        e.insert(batch(*tuples))
    got = sorted(
        (dict(t.values, RgmaTimestamp=t.timestamp) for t in e.store_rows("CpuLoad")),
        key=lambda r: r["host"],
    )
    expected = sorted(naive_latest(rows, ["host"]), key=lambda r: r["host"])
    assert got == expected


# view enforcement


def test_create_with_malformed_view_is_a_bind_error():
    from gridmon.errors import BindError

    with pytest.raises(BindError):
        engine(ProducerKind.DATABASE, view="WHERE (nosuch='x')")


def test_insert_outside_view_rejected():
    e = engine(ProducerKind.LATEST, view="WHERE (site='RAL')")
    with pytest.raises(ViewViolationError):
        e.insert(batch(cpu("n1", 0.5, 1, site="CERN")))
    assert e.store_rows("CpuLoad") == []


def test_batch_is_atomic_on_validation_failure():
    e = engine(ProducerKind.DATABASE)
    bad = Tuple("CpuLoad", {"host": "n2", "site": "RAL"}, 2)  # missing load1
    with pytest.raises(ValidationError):
        e.insert(batch(cpu("n1", 0.5, 1), bad))
    assert e.store_rows("CpuLoad") == []


# database queries vs nested-loop oracle


def test_database_history_filter():
    e = engine(ProducerKind.DATABASE)
    table = relq.parse_create_table("CREATE TABLE T (a INT, PRIMARY KEY (a))")
    e2 = ProducerEngine(ProducerConfig.single(ProducerKind.DATABASE, table))
    for a in (1, 2, 3):
        e2.insert(TupleBatch("T", (Tuple("T", {"a": a}, a),)))
    result = e2.answer_query(relq.parse_select("SELECT a FROM T WHERE a > 1"), QueryType.HISTORY)
    assert result.rows == [[2], [3]]


def test_database_join_service_status():
    config = ProducerConfig(
        kind=ProducerKind.DATABASE,
        declarations=(TableDecl(SERVICE), TableDecl(STATUS)),
    )
    e = ProducerEngine(config)
    e.insert(TupleBatch("Service", (
        Tuple("Service", {"uri": "u1", "type": "se", "site": "RAL"}, 1),
        Tuple("Service", {"uri": "u2", "type": "ce", "site": "RAL"}, 1),
    )))
    e.insert(TupleBatch("ServiceStatus", (
        Tuple("ServiceStatus", {"uri": "u1", "status": "ok"}, 2),
        Tuple("ServiceStatus", {"uri": "u2", "status": "down"}, 2),
        Tuple("ServiceStatus", {"uri": "u3", "status": "ok"}, 2),
    )))
    result = e.answer_query(
        relq.parse_select(
            "SELECT s.uri, st.status FROM Service s, ServiceStatus st WHERE s.uri = st.uri"
        ),
        QueryType.HISTORY,
    )
    assert result.columns == ["s.uri", "st.status"]
    assert result.rows == [["u1", "ok"], ["u2", "down"]]


def test_database_rejects_latest_query():
    e = engine(ProducerKind.DATABASE)
    with pytest.raises(KindMismatchError):
        e.answer_query(relq.parse_select("SELECT * FROM CpuLoad"), QueryType.LATEST)


def _random_query(rng):
    ops = ["=", "<>", "<", "<=", ">", ">="]
    def comp():
        col, lit = rng.choice(
            [("host", f"'n{rng.randint(0, 4)}'"), ("load1", round(rng.random(), 2)),
             ("site", rng.choice(["'RAL'", "'CERN'"])), ("RgmaTimestamp", rng.randint(0, 40))]
        )
        return f"{col} {rng.choice(ops)} {lit}"
    clause = comp()
    for _ in range(rng.randint(0, 2)):
        clause = f"({clause} {rng.choice(['AND', 'OR'])} {comp()})"
    return relq.parse_select(f"SELECT * FROM CpuLoad WHERE {clause}")


def test_database_random_queries_match_bruteforce():
    rng = random.Random(7)
    e = engine(ProducerKind.DATABASE)
    tuples = [
        cpu(f"n{rng.randint(0, 4)}", round(rng.random(), 2), rng.randint(0, 40),
            site=rng.choice(["RAL", "CERN"]))
        for _ in range(300)
    ]
    e.insert(batch(*tuples))
    for _ in range(50):
        query = _random_query(rng)
        got = e.answer_query(query, QueryType.HISTORY).rows
        expected = [
            [t.values["host"], t.values["site"], t.values["load1"], t.timestamp]
            for t in tuples
            if naive_eval(query.where, {"t": dict(t.values, RgmaTimestamp=t.timestamp)})
        ]
        assert got == expected


# subscriptions


def test_subscribe_delivers_matching_inserts_in_order():
    e = engine(ProducerKind.STREAM)
    sub = e.subscribe("http://sink", where=relq.parse_where("load1 > 0.5"))
    e.insert(batch(cpu("n1", 0.9, 1), cpu("n2", 0.1, 2), cpu("n3", 0.7, 3)))
    got = sub.pop(10, timeout=0.5)
    assert [t.values["host"] for t in got] == ["n1", "n3"]


def test_subscribe_filter_excludes():
    table = relq.parse_create_table("CREATE TABLE T (a INT, PRIMARY KEY (a))")
    e = ProducerEngine(ProducerConfig.single(ProducerKind.STREAM, table))
    sub = e.subscribe("http://sink", where=relq.parse_where("a = 1"))
    e.insert(TupleBatch("T", (Tuple("T", {"a": 2}, 1),)))
    assert sub.pop(10, timeout=0.1) == []


def test_subscribe_overflow_drops_oldest():
    e = engine(ProducerKind.STREAM, stream_buffer_capacity=2)
    sub = e.subscribe("http://sink")
    e.insert(batch(cpu("n1", 0.1, 1)))
    e.insert(batch(cpu("n2", 0.2, 2)))
    e.insert(batch(cpu("n3", 0.3, 3)))
    assert sub.dropped_count == 1
    got = sub.pop(10, timeout=0.5)
    assert [t.values["host"] for t in got] == ["n2", "n3"]


def test_subscribe_wrong_kind():
    e = engine(ProducerKind.DATABASE)
    with pytest.raises(KindMismatchError):
        e.subscribe("http://sink")


def test_unsubscribe_unknown():
    e = engine(ProducerKind.STREAM)
    with pytest.raises(UnknownIdError):
        e.unsubscribe("nope")


def test_vector_insert_equals_sequential(tmp_path):
    seq = engine(ProducerKind.STREAM)
    vec = engine(ProducerKind.STREAM)
    sub_seq = seq.subscribe("http://sink")
    sub_vec = vec.subscribe("http://sink")
    tuples = [cpu(f"n{i % 3}", float(i), i) for i in range(10)]
    for t in tuples:
        seq.insert(batch(t))
    vec.insert(batch(*tuples))
    assert sub_seq.pop(100, 0.5) == sub_vec.pop(100, 0.5)


# resilient log


def test_resilient_log_replays_after_restart(tmp_path):
    path = tmp_path / "stream.log"
    e = engine(ProducerKind.RESILIENT_STREAM, resilient_log_path=str(path))
    tuples = [cpu(f"n{i}", float(i), i) for i in range(5)]
    e.insert(batch(*tuples))
    e.close()  # simulated crash: all in-memory state discarded

    revived = engine(ProducerKind.RESILIENT_STREAM, resilient_log_path=str(path))
    assert revived.replay_window("CpuLoad") == tuples
    sub = revived.subscribe("http://sink", replay=True)
    assert sub.pop(100, 0.5) == tuples


def test_resilient_replay_window_is_bounded(tmp_path):
    path = tmp_path / "stream.log"
    e = engine(
        ProducerKind.RESILIENT_STREAM,
        resilient_log_path=str(path),
        replay_window_size=3,
    )
    e.insert(batch(*[cpu(f"n{i}", 0.0, i) for i in range(10)]))
    assert [t.timestamp for t in e.replay_window("CpuLoad")] == [7, 8, 9]


def test_resilient_tolerates_torn_tail(tmp_path):
    path = tmp_path / "stream.log"
    e = engine(ProducerKind.RESILIENT_STREAM, resilient_log_path=str(path))
    e.insert(batch(cpu("n1", 0.5, 1)))
    e.close()
    with path.open("ab") as f:
        f.write(b'{"table":"CpuLoad","host":"n2"')  # crash mid-write
    revived = engine(ProducerKind.RESILIENT_STREAM, resilient_log_path=str(path))
    assert [t.values["host"] for t in revived.replay_window("CpuLoad")] == ["n1"]


def test_resilient_requires_log_path():
    with pytest.raises(ConfigError):
        engine(ProducerKind.RESILIENT_STREAM)
    with pytest.raises(ConfigError):
        engine(ProducerKind.STREAM, resilient_log_path="/tmp/x.log")


# cleanup


def test_cleanup_deletes_matching_rows():
    week_ms = 604_800_000
    now = 1_000 * week_ms
    rule = CleanupRule(relq.parse_where(f"RgmaTimestamp < {now - week_ms}"), interval_sec=3600)
    config = ProducerConfig(
        kind=ProducerKind.DATABASE,
        declarations=(TableDecl(CPU, relq.ViewPredicate(), rule),),
    )
    e = ProducerEngine(config)
    eight_days = now - 8 * 86_400_000
    two_days = now - 2 * 86_400_000
    e.insert(batch(cpu("n1", 0.1, eight_days), cpu("n2", 0.2, two_days)))
    assert e.run_cleanup(now) == 1
    assert [t.values["host"] for t in e.store_rows("CpuLoad")] == ["n2"]


def test_cleanup_matching_nothing():
    rule = CleanupRule(relq.parse_where("load1 < 0"), interval_sec=3600)
    config = ProducerConfig(
        kind=ProducerKind.LATEST,
        declarations=(TableDecl(CPU, relq.ViewPredicate(), rule),),
    )
    e = ProducerEngine(config)
    e.insert(batch(cpu("n1", 0.5, 1)))
    assert e.run_cleanup() == 0


def test_cleanup_on_stream_rejected_at_create():
    rule = CleanupRule(relq.parse_where("load1 < 0"), interval_sec=3600)
    config = ProducerConfig(
        kind=ProducerKind.STREAM,
        declarations=(TableDecl(CPU, relq.ViewPredicate(), rule),),
    )
    with pytest.raises(ConfigError):
        ProducerEngine(config)


# canonical


def test_canonical_handler_answers():
    e = engine(ProducerKind.CANONICAL)
    fixed = [cpu("n1", 0.5, 10)]
    e.register_canonical(lambda query: list(fixed))
    result = e.answer_query(relq.parse_select("SELECT * FROM CpuLoad"), QueryType.HISTORY)
    assert result.rows == [["n1", "RAL", 0.5, 10]]
    latest = e.answer_query(relq.parse_select("SELECT * FROM CpuLoad"), QueryType.LATEST)
    assert latest.rows == [["n1", "RAL", 0.5, 10]]


def test_canonical_handler_view_violation():
    e = engine(ProducerKind.CANONICAL, view="WHERE (site='RAL')")
    e.register_canonical(lambda query: [cpu("n1", 0.5, 10, site="CERN")])
    with pytest.raises(ViewViolationError):
        e.answer_query(relq.parse_select("SELECT * FROM CpuLoad"), QueryType.HISTORY)


def test_canonical_without_handler():
    e = engine(ProducerKind.CANONICAL)
    with pytest.raises(ConfigError, match="no handler"):
        e.answer_query(relq.parse_select("SELECT * FROM CpuLoad"), QueryType.HISTORY)


def test_canonical_takes_no_inserts():
    e = engine(ProducerKind.CANONICAL)
    with pytest.raises(KindMismatchError):
        e.insert(batch(cpu("n1", 0.5, 1)))


def test_canonical_rejects_continuous():
    e = engine(ProducerKind.CANONICAL)
    e.register_canonical(lambda query: [])
    with pytest.raises(KindMismatchError):
        e.answer_query(relq.parse_select("SELECT * FROM CpuLoad"), QueryType.CONTINUOUS)


# ownership


def test_owned_producer_rejects_direct_inserts():
    e = engine(ProducerKind.LATEST)
    e.acquire("archiver-1")
    with pytest.raises(OwnershipError):
        e.insert(batch(cpu("n1", 0.5, 1)))
    assert e.insert(batch(cpu("n1", 0.5, 1)), owner_token="archiver-1") == 1
    e.release("archiver-1")
    assert e.insert(batch(cpu("n2", 0.5, 2))) == 1


def test_second_archiver_cannot_take_over():
    e = engine(ProducerKind.LATEST)
    e.acquire("archiver-1")
    with pytest.raises(OwnershipError):
        e.acquire("archiver-2")
