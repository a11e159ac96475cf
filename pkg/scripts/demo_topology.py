#!/usr/bin/env python3
"""Walk the layered fan-in topology end to end and print what lands where.

Two stream producers feed an archiver into a middle stream producer;
two more archivers feed a latest producer and a database producer, so
both the current picture and the full history stay queryable.
"""

import random
import sys
import time

from gridmon.agents import Agent, AgentConfig
from gridmon.agents.client import HttpClient, ProducerClient

CPU_DDL = (
    "CREATE TABLE CpuLoad (host STRING(64), site STRING(64), load1 REAL, PRIMARY KEY (host))"
)


def wait(client, path, predicate, timeout=20.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate(client.get(path)):
            return
        time.sleep(0.1)
    raise SystemExit(f"timed out waiting on {path}")


def main() -> int:
    agent = Agent(AgentConfig(), host_registry=True).start()
    client = HttpClient(agent.base_url)
    try:
        mid = client.post("/producer", {"kind": "STREAM", "tables": [{"ddl": CPU_DDL}]})
        lp = client.post("/producer", {"kind": "LATEST", "tables": [{"table": "CpuLoad"}]})
        dp = client.post("/producer", {"kind": "DATABASE", "tables": [{"table": "CpuLoad"}]})
        for target in (lp, dp, mid):
            client.post("/archiver", {"target": target["id"],
                                      "tables": [{"table": "CpuLoad"}]})

        sources = [
            ProducerClient(client.post("/producer", {
                "kind": "STREAM",
                "tables": [{"ddl": CPU_DDL, "view": f"WHERE (site='{site}')"}],
            })["endpoint"])
            for site in ("RAL", "CERN")
        ]
        time.sleep(1.0)  # let the archivers subscribe

        rng = random.Random(42)
        published = 0
        for round_no in range(30):
            for site, source in zip(("RAL", "CERN"), sources):
                source.insert_tuples("CpuLoad", [{
                    "table": "CpuLoad", "host": f"{site.lower()}-n{rng.randrange(4)}",
                    "site": site, "load1": round(rng.random() * 2, 2),
                    "RgmaTimestamp": round(time.time() * 1000),
                }])
                published += 1
        print(f"published {published} tuples at the sources")
        time.sleep(2.0)  # drain the chain

        latest = client.post("/consumer", {"sql": "SELECT * FROM CpuLoad",
                                           "type": "latest"})["result"]
        history = client.post("/consumer", {"sql": "SELECT host FROM CpuLoad",
                                            "type": "history"})["result"]
        print(f"latest picture: {len(latest['rows'])} hosts")
        for row in sorted(latest["rows"]):
            print("  " + " | ".join(str(v) for v in row))
        print(f"history rows at the database producer: {len(history['rows'])} "
              f"(each tuple arrives via the direct and the layered path)")
    finally:
        agent.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
