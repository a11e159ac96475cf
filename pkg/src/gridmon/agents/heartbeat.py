"""Client-side soft-state upkeep.

One scheduler thread per agent renews every hosted registration at
heartbeat_fraction of its termination interval. An unknown-id reply means
the registry lost us (expiry or restart): the client silently
re-registers under its old id. An unreachable registry backs off
exponentially (capped) while the client stays alive locally.
"""

from __future__ import annotations

import heapq
import logging
import threading
import time
from dataclasses import dataclass, field
from typing import Callable

from gridmon.agents.client import RegistryClient
from gridmon.errors import UnknownIdError

log = logging.getLogger(__name__)

BACKOFF_BASE_SEC = 0.5
BACKOFF_CAP_SEC = 30.0


@dataclass
class _Client:
    client_id: str
    interval_sec: float
    reregister: Callable[[], None]
    on_beat: Callable[[], None] | None = None
    backoff: float = 0.0
    gone: bool = False
    seq: int = field(default=0)


class HeartbeatScheduler(threading.Thread):
    def __init__(self, registry: RegistryClient, fraction: float = 0.5):
        super().__init__(name="heartbeats", daemon=True)
        self.registry = registry
        self.fraction = fraction
        self._lock = threading.Condition()
        self._heap: list[tuple[float, int, _Client]] = []
        self._clients: dict[str, _Client] = {}
        self._seq = 0
        self._stopped = False

    def add(
        self,
        client_id: str,
        interval_sec: float,
        reregister: Callable[[], None],
        on_beat: Callable[[], None] | None = None,
    ) -> None:
        with self._lock:
            client = _Client(client_id, interval_sec, reregister, on_beat)
            self._seq += 1
            client.seq = self._seq
            self._clients[client_id] = client
            heapq.heappush(self._heap, (time.monotonic() + self._delay(client), client.seq, client))
            self._lock.notify()

    def remove(self, client_id: str) -> None:
        with self._lock:
            client = self._clients.pop(client_id, None)
            if client is not None:
                client.gone = True

    def _delay(self, client: _Client) -> float:
        return client.backoff if client.backoff else client.interval_sec * self.fraction

    def beat_now(self, client_id: str) -> None:
        """Immediate renewal, for tests and for just-registered clients."""
        with self._lock:
            client = self._clients.get(client_id)
        if client is not None:
            self._beat(client)

    def _beat(self, client: _Client) -> None:
        try:
            self.registry.heartbeat(client.client_id)
            client.backoff = 0.0
            if client.on_beat is not None:
                client.on_beat()
        except UnknownIdError:
            log.info("registry forgot %s, re-registering", client.client_id)
            try:
                client.reregister()
                client.backoff = 0.0
            except Exception as exc:
                log.warning("re-registration of %s failed: %s", client.client_id, exc)
                client.backoff = min(max(client.backoff * 2, BACKOFF_BASE_SEC), BACKOFF_CAP_SEC)
        except Exception as exc:
            client.backoff = min(max(client.backoff * 2, BACKOFF_BASE_SEC), BACKOFF_CAP_SEC)
            log.warning("heartbeat for %s failed (%s), retrying in %.1fs",
                        client.client_id, exc, client.backoff)

    def run(self) -> None:
        while True:
            with self._lock:
                if self._stopped:
                    return
                if not self._heap:
                    self._lock.wait(0.5)
                    continue
                due, _, client = self._heap[0]
                delay = due - time.monotonic()
                if delay > 0:
                    self._lock.wait(min(delay, 0.5))
                    continue
                heapq.heappop(self._heap)
                if client.gone:
                    continue
            self._beat(client)
            with self._lock:
                if not client.gone and not self._stopped:
                    heapq.heappush(
                        self._heap, (time.monotonic() + self._delay(client), client.seq, client)
                    )

    def stop(self) -> None:
        with self._lock:
            self._stopped = True
            self._lock.notify()
