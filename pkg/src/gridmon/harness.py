"""Load and topology harness.

Simulates n sites, each publishing one storage-element and three
computing-element streams on a fixed period, all feeding one archiver
into a latest-value producer that is queried throughout the run to see
whether the archiver keeps up. Every metric is derived from observable
API calls (stats endpoints and query results), nothing from internals.

Agents run as separate processes by default so the measurement is not
distorted by the driver sharing their interpreter.
"""

from __future__ import annotations

import heapq
import json
import logging
import random
import subprocess
import sys
import threading
import time
from configparser import ConfigParser
from dataclasses import dataclass, field
from pathlib import Path

from gridmon.agents import Agent, AgentConfig
from gridmon.agents.client import HttpClient
from gridmon.core import now_ms
from gridmon.errors import GridmonError

log = logging.getLogger(__name__)

CE_DDL = (
    "CREATE TABLE CE (ceId STRING(64), site STRING(64), runningJobs INT, totalCpus INT, "
    "PRIMARY KEY (ceId))"
)
SE_DDL = (
    "CREATE TABLE SE (seId STRING(64), site STRING(64), usedGB REAL, totalGB REAL, "
    "PRIMARY KEY (seId))"
)


class AgentProcess:
    """A registry or node agent in its own process, killable mid-stream."""

    def __init__(self, role: str, registry_url: str = "", listen: str = "127.0.0.1:0"):
        args = [sys.executable, "-m", "gridmon.cli", "serve", role, "--listen", listen]
        if registry_url:
            args += ["--registry", registry_url]
        self.args = args
        self.process: subprocess.Popen | None = None
        self.base_url = ""

    def start(self, timeout: float = 15.0) -> str:
        self.process = subprocess.Popen(
            self.args, stdout=subprocess.PIPE, stderr=subprocess.DEVNULL, text=True
        )
        deadline = time.monotonic() + timeout
        line = ""
        while time.monotonic() < deadline:
            line = self.process.stdout.readline()
            if line.startswith("READY "):
                self.base_url = line.split()[1].strip()
                return self.base_url
            if self.process.poll() is not None:
                break
        raise RuntimeError(f"agent process failed to start: {self.args} ({line!r})")

    def kill(self) -> None:
        """SIGKILL: the crash case. No cleanup runs in the child."""
        if self.process is not None:
            self.process.kill()
            self.process.wait()

    def terminate(self) -> None:
        if self.process is not None and self.process.poll() is None:
            self.process.terminate()
            try:
                self.process.wait(timeout=10)
            except subprocess.TimeoutExpired:
                self.process.kill()
                self.process.wait()


@dataclass
class SiteLoadConfig:
    sites: int = 50
    period_ms: int = 500
    duration_sec: int = 60
    vector_periods: int = 1  # rows buffered per INSERT; 1 publishes individually
    publisher_workers: int = 32
    sample_interval_sec: float = 1.0
    termination_interval_sec: int = 30
    in_process_agents: bool = False
    seed: int = 20030901

    @classmethod
    def from_file(cls, path: str | Path) -> "SiteLoadConfig":
        parser = ConfigParser()
        parser.read(str(path))
        kwargs: dict = {}
        sites = parser["sites"] if parser.has_section("sites") else {}
        for key, cast in [
            ("sites", int), ("period_ms", int), ("duration_sec", int),
            ("vector_periods", int), ("publisher_workers", int),
            ("sample_interval_sec", float), ("termination_interval_sec", int),
            ("seed", int),
        ]:
            if key in sites:
                kwargs[key] = cast(sites[key])
        if parser.has_section("agents") and "in_process" in parser["agents"]:
            kwargs["in_process_agents"] = parser["agents"].getboolean("in_process")
        return cls(**kwargs)


def _percentiles(samples: list[float]) -> dict:
    if not samples:
        return {"p50": None, "p95": None, "max": None}
    ordered = sorted(samples)
    def pick(q: float):
        return ordered[min(len(ordered) - 1, int(q * len(ordered)))]
    return {"p50": pick(0.50), "p95": pick(0.95), "max": ordered[-1]}


@dataclass
class LoadReport:
    config: SiteLoadConfig
    published: int = 0
    insert_calls: int = 0
    archived: dict = field(default_factory=dict)
    lag_samples_ms: list = field(default_factory=list)
    staleness_samples_ms: list = field(default_factory=list)
    dropped_total: int = 0
    publish_errors: int = 0
    saturated: bool = False
    wall_seconds: float = 0.0

    def insert_throughput(self) -> float:
        return self.published / self.wall_seconds if self.wall_seconds else 0.0

    def to_json(self) -> dict:
        return {
            "sites": self.config.sites,
            "periodMs": self.config.period_ms,
            "durationSec": self.config.duration_sec,
            "vectorPeriods": self.config.vector_periods,
            "published": self.published,
            "insertCalls": self.insert_calls,
            "archived": self.archived,
            "insertThroughputPerSec": round(self.insert_throughput(), 1),
            "archiverLagMs": _percentiles(self.lag_samples_ms),
            "latestStalenessMs": _percentiles(self.staleness_samples_ms),
            "droppedTotal": self.dropped_total,
            "publishErrors": self.publish_errors,
            "saturated": self.saturated,
            "wallSeconds": round(self.wall_seconds, 1),
        }

    def summary(self) -> str:
        j = self.to_json()
        lines = [
            f"{j['sites']} sites x 4 stream producers, period {j['periodMs']} ms, "
            f"{j['durationSec']} s run (vector={j['vectorPeriods']})",
            f"published {j['published']} tuples in {j['insertCalls']} inserts "
            f"({j['insertThroughputPerSec']}/s), archived {sum(self.archived.values())}",
            f"archiver lag ms: {j['archiverLagMs']}",
            f"latest staleness ms: {j['latestStalenessMs']}",
            f"drops {j['droppedTotal']}, publish errors {j['publishErrors']}, "
            f"saturated={j['saturated']}",
        ]
        return "\n".join(lines)


class _Publisher:
    """One producer's publication schedule and pending vector buffer."""

    def __init__(self, producer_id: str, table: str, make_row):
        self.producer_id = producer_id
        self.table = table
        self.make_row = make_row
        self.pending: list[dict] = []


class SiteLoadHarness:
    def __init__(self, config: SiteLoadConfig):
        self.config = config
        self.report = LoadReport(config)
        self.rng = random.Random(config.seed)
        self._agents_in_process: list[Agent] = []
        self._agent_procs: list[AgentProcess] = []
        self.registry_url = ""
        self.producer_agent_url = ""
        self.archive_agent_url = ""
        self._publishers: list[_Publisher] = []
        self._producer_ids: list[str] = []
        self._lp_endpoint = ""
        self._archiver_id = ""
        self._stop = threading.Event()
        self._count_lock = threading.Lock()

    # topology

    def _boot_agent(self, role: str, registry_url: str = "") -> str:
        if self.config.in_process_agents:
            agent = Agent(
                AgentConfig(registry_url=registry_url), host_registry=(role == "registry")
            ).start()
            self._agents_in_process.append(agent)
            return agent.base_url
        proc = AgentProcess(role, registry_url)
        self._agent_procs.append(proc)
        return proc.start()

    def setup(self) -> None:
        self.registry_url = self._boot_agent("registry")
        self.producer_agent_url = self._boot_agent("agent", self.registry_url)
        self.archive_agent_url = self._boot_agent("agent", self.registry_url)

        client = HttpClient(self.producer_agent_url, timeout=30.0)
        interval = self.config.termination_interval_sec
        for site in range(self.config.sites):
            site_name = f"site{site:03d}"
            created = client.post("/producer", {
                "kind": "STREAM",
                "tables": [{"ddl": SE_DDL, "view": f"WHERE (seId='{site_name}-se')"}],
                "terminationIntervalSec": interval,
            })
            self._producer_ids.append(created["id"])
            self._publishers.append(
                _Publisher(created["id"], "SE", self._se_row(f"{site_name}-se"))
            )
            for ce in range(3):
                ce_name = f"{site_name}-ce{ce}"
                created = client.post("/producer", {
                    "kind": "STREAM",
                    "tables": [{"ddl": CE_DDL, "view": f"WHERE (ceId='{ce_name}')"}],
                    "terminationIntervalSec": interval,
                })
                self._producer_ids.append(created["id"])
                self._publishers.append(
                    _Publisher(created["id"], "CE", self._ce_row(ce_name))
                )
        client.close()

        archive = HttpClient(self.archive_agent_url, timeout=30.0)
        lp = archive.post("/producer", {
            "kind": "LATEST",
            "tables": [{"table": "CE"}, {"table": "SE"}],
            "terminationIntervalSec": interval,
        })
        self._lp_endpoint = lp["endpoint"]
        archiver = archive.post("/archiver", {
            "target": self._lp_endpoint,
            "tables": [{"table": "CE"}, {"table": "SE"}],
        })
        self._archiver_id = archiver["id"]
        archive.close()
        self._wait_subscriptions()

    def _wait_subscriptions(self, timeout: float = 60.0) -> None:
        client = HttpClient(self.producer_agent_url, timeout=10.0)
        deadline = time.monotonic() + timeout
        missing = list(self._producer_ids)
        while missing and time.monotonic() < deadline:
            missing = [
                pid
                for pid in missing
                if not client.get(f"/producer/{pid}/stats")["subscriptions"]
            ]
            if missing:
                time.sleep(0.2)
        client.close()
        if missing:
            raise RuntimeError(f"{len(missing)} producers never got an archiver subscription")

    def _se_row(self, se_name: str):
        site = se_name.rsplit("-", 1)[0]
        def make():
            used = round(self.rng.uniform(0, 900), 1)
            return {"table": "SE", "seId": se_name, "site": site,
                    "usedGB": used, "totalGB": 1000.0, "RgmaTimestamp": now_ms()}
        return make

    def _ce_row(self, ce_name: str):
        site = ce_name.rsplit("-", 2)[0]
        def make():
            return {"table": "CE", "ceId": ce_name, "site": site,
                    "runningJobs": self.rng.randint(0, 64), "totalCpus": 64,
                    "RgmaTimestamp": now_ms()}
        return make

    # publication

    def _publish_loop(self) -> None:
        period = self.config.period_ms / 1000.0
        start = time.monotonic()
        count = max(1, len(self._publishers))
        # phase-shift publishers evenly across one period
        heap = [(start + period * (i / count), i) for i in range(len(self._publishers))]
        heapq.heapify(heap)
        heap_lock = threading.Lock()

        def worker():
            client = HttpClient(self.producer_agent_url, timeout=10.0)
            while not self._stop.is_set():
                with heap_lock:
                    due, idx = heap[0]
                    ready = due <= time.monotonic()
                    if ready:
                        heapq.heappop(heap)
                if not ready:
                    self._stop.wait(min(max(due - time.monotonic(), 0.001), 0.05))
                    continue
                publisher = self._publishers[idx]
                publisher.pending.append(publisher.make_row())
                if len(publisher.pending) >= self.config.vector_periods:
                    rows, publisher.pending = publisher.pending, []
                    try:
                        client.post(
                            f"/producer/{publisher.producer_id}/insert",
                            {"table": publisher.table, "tuples": rows},
                        )
                        with self._count_lock:
                            self.report.published += len(rows)
                            self.report.insert_calls += 1
                    except GridmonError:
                        with self._count_lock:
                            self.report.publish_errors += 1
                with heap_lock:
                    heapq.heappush(heap, (due + period, idx))
            client.close()

        workers = [
            threading.Thread(target=worker, name=f"publisher-{i}", daemon=True)
            for i in range(self.config.publisher_workers)
        ]
        for w in workers:
            w.start()
        self._stop.wait(self.config.duration_sec)
        self._stop.set()
        for w in workers:
            w.join(timeout=10.0)

    # sampling

    def _sample_loop(self) -> None:
        archive = HttpClient(self.archive_agent_url, timeout=10.0)
        consecutive_over = 0
        threshold = 2 * self.config.period_ms
        while not self._stop.wait(self.config.sample_interval_sec):
            try:
                stats = archive.get(f"/archiver/{self._archiver_id}/stats")
                lags = [
                    t["lagMs"] for t in stats["tables"].values() if t["lagMs"] is not None
                ]
                if lags:
                    worst = max(lags)
                    self.report.lag_samples_ms.append(worst)
                    consecutive_over = consecutive_over + 1 if worst > threshold else 0
                    if consecutive_over >= 3:
                        self.report.saturated = True
                outcome = archive.post(
                    "/consumer", {"sql": "SELECT * FROM CE", "type": "latest"}
                )
                rows = outcome["result"]["rows"]
                if rows:
                    oldest = min(row[-1] for row in rows)
                    self.report.staleness_samples_ms.append(now_ms() - oldest)
            except GridmonError as exc:
                log.warning("sample failed: %s", exc)
        archive.close()

    def _collect_final(self) -> None:
        archive = HttpClient(self.archive_agent_url, timeout=30.0)
        deadline = time.monotonic() + 30.0
        expected = self.report.published
        while time.monotonic() < deadline:
            stats = archive.get(f"/archiver/{self._archiver_id}/stats")
            self.report.archived = {
                name: t["archived"] for name, t in stats["tables"].items()
            }
            if sum(self.report.archived.values()) >= expected:
                break
            time.sleep(0.5)
        producer_client = HttpClient(self.producer_agent_url, timeout=30.0)
        sub_drops = 0
        for pid in self._producer_ids:
            for sub in producer_client.get(f"/producer/{pid}/stats")["subscriptions"]:
                sub_drops += sub["droppedCount"]
        stats = archive.get(f"/archiver/{self._archiver_id}/stats")
        consumer_drops = sum(t["consumer"]["droppedCount"] for t in stats["tables"].values())
        self.report.dropped_total = sub_drops + consumer_drops
        producer_client.close()
        archive.close()

    def run(self) -> LoadReport:
        started = time.monotonic()
        sampler = threading.Thread(target=self._sample_loop, name="sampler", daemon=True)
        sampler.start()
        self._publish_loop()
        sampler.join(timeout=10.0)
        self.report.wall_seconds = time.monotonic() - started
        self._collect_final()
        return self.report

    def teardown(self) -> None:
        self._stop.set()
        for agent in self._agents_in_process:
            agent.stop()
        self._agents_in_process.clear()
        for proc in self._agent_procs:
            proc.terminate()
        self._agent_procs.clear()


def simulate_sites(config: SiteLoadConfig) -> LoadReport:
    """Full run: boot topology, publish, sample, report, tear down."""
    harness = SiteLoadHarness(config)
    try:
        harness.setup()
        return harness.run()
    finally:
        harness.teardown()


def main(argv: list[str] | None = None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="site publication load harness")
    parser.add_argument("--sites", type=int, default=50)
    parser.add_argument("--period-ms", type=int, default=500)
    parser.add_argument("--duration", type=int, default=60)
    parser.add_argument("--vector-periods", type=int, default=1)
    parser.add_argument("--config", help="topology spec file (key=value sections)")
    parser.add_argument("--json", action="store_true")
    parser.add_argument("--in-process", action="store_true")
    args = parser.parse_args(argv)

    if args.config:
        config = SiteLoadConfig.from_file(args.config)
    else:
        config = SiteLoadConfig(
            sites=args.sites,
            period_ms=args.period_ms,
            duration_sec=args.duration,
            vector_periods=args.vector_periods,
            in_process_agents=args.in_process,
        )
    logging.basicConfig(level="INFO")
    report = simulate_sites(config)
    print(json.dumps(report.to_json(), indent=1) if args.json else report.summary())
    return 0


if __name__ == "__main__":
    sys.exit(main())
