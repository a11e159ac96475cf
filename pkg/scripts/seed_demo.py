#!/usr/bin/env python3
"""Seed a small live deployment for the CLI and the browser console.

One process hosts the registry and a node agent. Two stream producers
publish service announcements and periodic status checks; an archiver
collects both into a latest-value producer, so `SELECT * FROM Service`
latest queries show the current grid picture. A CpuLoad stream keeps a
continuous query busy.

Prints the agent base URL, then publishes until interrupted (or exits
after --duration seconds).
"""

import argparse
import random
import sys
import threading
import time

from gridmon.agents import Agent, AgentConfig
from gridmon.agents.client import HttpClient, ProducerClient
from gridmon.core import now_ms

SERVICE_DDL = (
    "CREATE TABLE Service (uri STRING(255), type STRING(64), site STRING(64), "
    "PRIMARY KEY (uri))"
)
STATUS_DDL = (
    "CREATE TABLE ServiceStatus (uri STRING(255), status STRING(32), PRIMARY KEY (uri))"
)
CPU_DDL = (
    "CREATE TABLE CpuLoad (host STRING(64), site STRING(64), load1 REAL, PRIMARY KEY (host))"
)

SERVICES = [
    ("http://ral.example/se", "storage", "RAL"),
    ("http://ral.example/ce", "compute", "RAL"),
    ("http://cern.example/se", "storage", "CERN"),
    ("http://cern.example/rb", "broker", "CERN"),
]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--listen", default="127.0.0.1:0", help="host:port for the agent")
    parser.add_argument("--duration", type=float, default=0.0, help="exit after N seconds")
    parser.add_argument("--period", type=float, default=2.0, help="status publish period (s)")
    args = parser.parse_args()

    host, _, port = args.listen.partition(":")
    agent = Agent(
        AgentConfig(listen_host=host or "127.0.0.1", listen_port=int(port or 0)),
        host_registry=True,
    ).start()
    client = HttpClient(agent.base_url)

    announcer = client.post("/producer", {
        "kind": "STREAM", "tables": [{"ddl": SERVICE_DDL}]})
    checker = client.post("/producer", {
        "kind": "STREAM", "tables": [{"ddl": STATUS_DDL}]})
    cpu = client.post("/producer", {
        "kind": "STREAM", "tables": [{"ddl": CPU_DDL}]})
    collector = client.post("/producer", {
        "kind": "LATEST", "tables": [{"table": "Service"}, {"table": "ServiceStatus"}]})
    client.post("/archiver", {
        "target": collector["id"],
        "tables": [{"table": "Service"}, {"table": "ServiceStatus"}],
    })
    # a history archive of the same streams, so join queries have a target
    history = client.post("/producer", {
        "kind": "DATABASE", "tables": [{"table": "Service"}, {"table": "ServiceStatus"}]})
    client.post("/archiver", {
        "target": history["id"],
        "tables": [{"table": "Service"}, {"table": "ServiceStatus"}],
    })

    announce = ProducerClient(announcer["endpoint"])
    check = ProducerClient(checker["endpoint"])
    load = ProducerClient(cpu["endpoint"])

    # services announce themselves once at startup, after the archiver's
    # subscriptions land so the announcements reach the collector
    deadline = time.monotonic() + 15
    while time.monotonic() < deadline:
        if announce.stats()["subscriptions"] and check.stats()["subscriptions"]:
            break
        time.sleep(0.05)
    announce.insert_tuples("Service", [
        {"table": "Service", "uri": uri, "type": kind, "site": site,
         "RgmaTimestamp": now_ms()}
        for uri, kind, site in SERVICES
    ])

    stop = threading.Event()
    rng = random.Random()

    def publish_forever():
        while not stop.wait(args.period):
            check.insert_tuples("ServiceStatus", [
                {"table": "ServiceStatus", "uri": uri,
                 "status": rng.choice(["ok", "ok", "ok", "degraded"]),
                 "RgmaTimestamp": now_ms()}
                for uri, _, _ in SERVICES
            ])
            load.insert_tuples("CpuLoad", [
                {"table": "CpuLoad", "host": f"node{i}", "site": "RAL",
                 "load1": round(rng.random() * 4, 2), "RgmaTimestamp": now_ms()}
                for i in range(3)
            ])

    publisher = threading.Thread(target=publish_forever, daemon=True)
    publisher.start()

    print(f"READY {agent.base_url}")
    sys.stdout.flush()
    try:
        if args.duration:
            time.sleep(args.duration)
        else:
            while True:
                time.sleep(1)
    except KeyboardInterrupt:
        pass
    finally:
        stop.set()
        agent.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
