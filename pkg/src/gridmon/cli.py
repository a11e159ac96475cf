"""Command line tool.

Designed for the simple things: list and describe tables, run one
producer of each kind plus one archiver per session, publish with INSERT
statements, and issue any kind of query. Session state (which producers
and archiver this CLI controls) lives in a small JSON file so consecutive
invocations compose; anything more elaborate should use the library.
"""

from __future__ import annotations

import json
import logging
import os
import signal
import sys
import time
from pathlib import Path

import click

from gridmon.agents import Agent, AgentConfig
from gridmon.agents.client import HttpClient, ProducerClient
from gridmon.agents.config import REGISTRY_URL_ENV
from gridmon.errors import GridmonError

AGENT_URL_ENV = "GRIDMON_AGENT_URL"
SESSION_ENV = "GRIDMON_SESSION"
DEFAULT_SESSION = "~/.gridmon-session.json"


def fail(message: str) -> None:
    raise click.ClickException(message)


class Session:
    """Per-session component handles: one producer per kind, one archiver."""

    def __init__(self, path: Path):
        self.path = path
        self.data = {"producers": {}, "archiver": None, "consumers": {}}
        if path.exists():
            self.data.update(json.loads(path.read_text()))

    def save(self) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text(json.dumps(self.data, indent=1))

    def ensure_no_producer(self, kind: str) -> None:
        if kind in self.data["producers"]:
            fail(f"this session already runs a {kind} producer "
                 f"({self.data['producers'][kind]['id']}); one instance per kind")

    def add_producer(self, kind: str, info: dict) -> None:
        self.ensure_no_producer(kind)
        self.data["producers"][kind] = info
        self.save()

    def producer_for_table(self, table: str) -> dict:
        matches = [
            info
            for info in self.data["producers"].values()
            if table.lower() in [t.lower() for t in info["tables"]]
        ]
        if not matches:
            fail(f"no session producer publishes table {table}; run 'producer create' first")
        return matches[0]

    def ensure_no_archiver(self) -> None:
        if self.data["archiver"] is not None:
            fail(f"this session already runs archiver {self.data['archiver']['id']}")

    def set_archiver(self, info: dict) -> None:
        self.ensure_no_archiver()
        self.data["archiver"] = info
        self.save()


def render_table(columns: list[str], rows: list[list]) -> str:
    cells = [[str(v) for v in row] for row in rows]
    widths = [len(c) for c in columns]
    for row in cells:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    head = " | ".join(c.ljust(widths[i]) for i, c in enumerate(columns))
    sep = "-+-".join("-" * w for w in widths)
    body = [" | ".join(cell.ljust(widths[i]) for i, cell in enumerate(row)) for row in cells]
    return "\n".join([head, sep, *body])


@click.group()
@click.option("--registry", envvar=REGISTRY_URL_ENV, default="", help="Registry base URL.")
@click.option("--agent", envvar=AGENT_URL_ENV, default="", help="Node agent base URL.")
@click.option("--session", envvar=SESSION_ENV, default=DEFAULT_SESSION,
              help="Session state file.")
@click.option("--json", "as_json", is_flag=True, help="Machine-readable output.")
@click.pass_context
def main(ctx, registry, agent, session, as_json):
    """Relational grid monitoring toolkit."""
    logging.basicConfig(level=os.environ.get("GRIDMON_LOG", "WARNING"))
    ctx.obj = {
        "registry": registry,
        "agent": agent,
        "session": Session(Path(session).expanduser()),
        "json": as_json,
    }


def agent_client(ctx) -> HttpClient:
    url = ctx.obj["agent"]
    if not url:
        fail(f"no agent URL; pass --agent or set {AGENT_URL_ENV}")
    return HttpClient(url)


# serving


@main.group()
def serve():
    """Run agents."""


def _run_forever(agent: Agent, label: str) -> None:
    logging.getLogger().setLevel(agent.config.log_level.upper())
    click.echo(f"READY {agent.base_url}", err=False)
    sys.stdout.flush()
    stop = {"done": False}

    def handle(signum, frame):
        stop["done"] = True

    signal.signal(signal.SIGTERM, handle)
    signal.signal(signal.SIGINT, handle)
    try:
        while not stop["done"]:
            time.sleep(0.2)
    finally:
        agent.stop()


@serve.command("registry")
@click.option("--listen", default="127.0.0.1:0", help="host:port to bind.")
@click.option("--config", "config_path", default=None, help="key=value config file.")
@click.option("--snapshot", "snapshot_path", default=None,
              help="Load registrations from this file at start, save on shutdown. "
                   "Optional: soft state re-registers by itself after a cold start.")
def serve_registry(listen, config_path, snapshot_path):
    """Run the per-VO registry (plus schema) agent."""
    config = AgentConfig.from_file(config_path) if config_path else AgentConfig()
    host, _, port = listen.partition(":")
    config.listen_host, config.listen_port = host, int(port or 0)
    agent = Agent(config, host_registry=True).start()
    if snapshot_path and Path(snapshot_path).exists():
        agent.registry_service.load_snapshot(snapshot_path)
    try:
        _run_forever(agent, "registry")
    finally:
        if snapshot_path:
            agent.registry_service.save_snapshot(snapshot_path)


@serve.command("agent")
@click.option("--listen", default="127.0.0.1:0", help="host:port to bind.")
@click.option("--registry", envvar=REGISTRY_URL_ENV, required=False, default="")
@click.option("--config", "config_path", default=None, help="key=value config file.")
def serve_agent(listen, registry, config_path):
    """Run a node agent hosting producers, consumers and archivers."""
    config = AgentConfig.from_file(config_path) if config_path else AgentConfig()
    host, _, port = listen.partition(":")
    config.listen_host, config.listen_port = host, int(port or 0)
    if registry:
        config.registry_url = registry
    _run_forever(Agent(config).start(), "agent")


# schema


@main.group()
def tables():
    """Browse the schema."""


@tables.command("list")
@click.pass_context
def tables_list(ctx):
    """What tables exist."""
    listing = agent_client(ctx).get("/tables")["tables"]
    if ctx.obj["json"]:
        click.echo(json.dumps(listing, indent=1))
        return
    rows = [[t["name"], ", ".join(t["definingFields"]), len(t["columns"])] for t in listing]
    click.echo(render_table(["table", "defining fields", "columns"], rows))


@tables.command("describe")
@click.argument("name")
@click.pass_context
def tables_describe(ctx, name):
    """Details of one table."""
    info = agent_client(ctx).get(f"/tables/{name}")
    if ctx.obj["json"]:
        click.echo(json.dumps(info, indent=1))
        return
    rows = [
        [c["name"], c["type"], "yes" if c["name"] in info["definingFields"] else ""]
        for c in info["columns"]
    ]
    click.echo(render_table(["column", "type", "defining"], rows))


# producers


@main.group()
def producer():
    """Create producers and publish tuples."""


@producer.command("create")
@click.option("--kind", type=click.Choice(
    ["STREAM", "RESILIENT_STREAM", "DATABASE", "LATEST", "CANONICAL"]), required=True)
@click.option("--table-ddl", "ddls", multiple=True, required=True,
              help="CREATE TABLE statement; repeatable.")
@click.option("--where", "view", default="", help="View predicate for the first table.")
@click.option("--log", "log_path", default=None, help="Resilient log path.")
@click.option("--interval", default=60, help="Registration termination interval (s).")
@click.pass_context
def producer_create(ctx, kind, ddls, view, log_path, interval):
    """Create one producer (one instance per kind per session)."""
    ctx.obj["session"].ensure_no_producer(kind)
    body = {
        "kind": kind,
        "tables": [{"ddl": ddl, "view": view if i == 0 else ""} for i, ddl in enumerate(ddls)],
        "terminationIntervalSec": interval,
    }
    if log_path:
        body["resilientLogPath"] = log_path
    created = agent_client(ctx).post("/producer", body)
    info = {
        "id": created["id"],
        "endpoint": created["endpoint"],
        "tables": [r["table"] for r in created["registrations"]],
    }
    ctx.obj["session"].add_producer(kind, info)
    click.echo(json.dumps(created, indent=1) if ctx.obj["json"] else
               f"created {kind} producer {info['id']} at {info['endpoint']}")


@producer.command("insert")
@click.argument("sql")
@click.pass_context
def producer_insert(ctx, sql):
    """Publish tuples with an INSERT statement via a session producer."""
    from gridmon.relq import parse_insert

    statement = parse_insert(sql)
    info = ctx.obj["session"].producer_for_table(statement.table)
    accepted = ProducerClient(info["endpoint"]).insert_sql(sql)
    click.echo(f"accepted {accepted} tuple(s)")


# queries


@main.command("query")
@click.option("--type", "qtype", type=click.Choice(["history", "latest", "continuous"]),
              required=True)
@click.option("--replay", is_flag=True, help="Ask resilient producers for their replay window.")
@click.option("--max", "max_tuples", default=0, help="Stop a continuous query after N tuples.")
@click.option("--duration", default=0.0, help="Stop a continuous query after N seconds.")
@click.argument("sql")
@click.pass_context
def query(ctx, qtype, replay, max_tuples, duration, sql):
    """Issue any kind of query."""
    client = agent_client(ctx)
    if qtype in ("history", "latest"):
        outcome = client.post("/consumer", {"sql": sql, "type": qtype})
        result = outcome["result"]
        if ctx.obj["json"]:
            click.echo(json.dumps(result, indent=1))
        else:
            click.echo(render_table(result["columns"], result["rows"]))
            for warning in result["warnings"]:
                click.echo(f"warning: {warning}", err=True)
        return

    created = client.post("/consumer", {"sql": sql, "type": qtype, "replay": replay})
    cid = created["id"]
    click.echo(f"continuous query {cid}; interrupt to stop", err=True)
    seen = 0
    deadline = time.monotonic() + duration if duration else None
    header_done = ctx.obj["json"]
    try:
        while True:
            if deadline is not None and time.monotonic() > deadline:
                break
            got = client.get(f"/consumer/{cid}/pop", params={"max": 500, "timeoutMs": 1000})
            if not header_done:
                click.echo(" | ".join(got["columns"]))
                header_done = True
            for row in got["rows"]:
                click.echo(json.dumps(row) if ctx.obj["json"] else
                           " | ".join(str(v) for v in row))
                seen += 1
                if max_tuples and seen >= max_tuples:
                    return
    except KeyboardInterrupt:
        pass
    finally:
        try:
            client.delete(f"/consumer/{cid}")
        except GridmonError:
            pass


# archiver


@main.command("archive")
@click.option("--target", required=True, help="Target producer id (session or raw id/URL).")
@click.option("--table", "archive_tables", multiple=True, required=True)
@click.option("--replay", is_flag=True)
@click.pass_context
def archive(ctx, target, archive_tables, replay):
    """Stream tables through an archiver into an insertable producer."""
    session = ctx.obj["session"]
    session.ensure_no_archiver()
    target_ref = target
    for info in session.data["producers"].values():
        if info["id"] == target:
            target_ref = info["endpoint"]
    created = agent_client(ctx).post(
        "/archiver",
        {"target": target_ref, "tables": [{"table": t} for t in archive_tables],
         "replay": replay},
    )
    session.set_archiver({"id": created["id"]})
    click.echo(f"archiver {created['id']} running")


@main.command("stats")
@click.argument("component_id")
@click.pass_context
def stats(ctx, component_id):
    """Stats for a producer, consumer or archiver by id."""
    client = agent_client(ctx)
    for prefix in ("producer", "archiver", "consumer"):
        try:
            info = client.get(f"/{prefix}/{component_id}/stats")
            click.echo(json.dumps(info, indent=1))
            return
        except GridmonError:
            continue
    fail(f"no component {component_id} on this agent")


if __name__ == "__main__":
    main()
