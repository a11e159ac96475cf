"""Consumer engine behavior that the full-stack tests do not pin down."""

import time

from gridmon import relq
from gridmon.agents.client import RegistryClient
from gridmon.consumer import ConsumerEngine, _dequalify
from gridmon.model import ProducerKind
from gridmon.relq import QueryType
from test_agents import CPU_DDL, insert, make_producer


def test_dequalify_strips_table_qualifiers():
    expr = relq.parse_where("CpuLoad.load1 > 0.5 AND (t.a = 1 OR b <> 2)")
    stripped = _dequalify(expr)
    assert relq.unparse_where(stripped) == "(load1 > 0.5 AND (a = 1 OR b <> 2))"


def test_unreachable_target_times_out_into_warning(registry_agent, node_agent):
    _, live = make_producer(node_agent, kind="DATABASE")
    insert(live, "n1", 0.5, ts=1)
    registry = RegistryClient(registry_agent.base_url)
    # a dead producer: registered endpoint nobody listens on
    registry.register_producer(
        "http://127.0.0.1:9/producer/dead", "CpuLoad", "",
        ProducerKind.DATABASE, interval_sec=60,
    )
    engine = ConsumerEngine(
        "SELECT host FROM CpuLoad",
        QueryType.HISTORY,
        registry=registry,
        target_timeout=1.0,
    )
    started = time.monotonic()
    result, reports = engine.run_once()
    elapsed = time.monotonic() - started
    assert elapsed < 4.0  # bounded by the per-target timeout, not a hang
    assert result.rows == [["n1"]]
    assert len(result.warnings) == 1 and "dead" in result.warnings[0]
    assert sorted(r.ok for r in reports) == [False, True]


def test_one_shot_with_no_targets_is_empty_not_an_error(registry_agent, node_agent):
    registry = RegistryClient(registry_agent.base_url)
    registry.create_table(CPU_DDL)
    engine = ConsumerEngine(
        "SELECT * FROM CpuLoad", QueryType.LATEST, registry=registry
    )
    result, reports = engine.run_once()
    assert result.rows == []
    assert result.columns == ["host", "site", "load1", "RgmaTimestamp"]
    assert result.warnings == [] and reports == []
