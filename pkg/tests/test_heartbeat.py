"""Heartbeat scheduler state machine against a scripted registry."""

import time

from conftest import wait_until
from gridmon.agents.heartbeat import HeartbeatScheduler
from gridmon.errors import ProtocolError, UnknownIdError


class ScriptedRegistry:
    """Stands in for RegistryClient: each call pops the next behavior."""

    def __init__(self):
        self.mode = "ok"
        self.beats = 0

    def heartbeat(self, client_id):
        self.beats += 1
        if self.mode == "ok":
            return 0
        if self.mode == "unknown":
            raise UnknownIdError(client_id)
        raise ProtocolError("registry unreachable")


def test_normal_operation_keeps_beating():
    registry = ScriptedRegistry()
    scheduler = HeartbeatScheduler(registry, fraction=0.5)
    scheduler.start()
    scheduler.add("p-1", interval_sec=0.2, reregister=lambda: None)
    wait_until(lambda: registry.beats >= 5, timeout=5.0, message="several heartbeats")
    scheduler.stop()


def test_unknown_id_triggers_reregistration():
    registry = ScriptedRegistry()
    registry.mode = "unknown"
    reregistered = []
    scheduler = HeartbeatScheduler(registry, fraction=0.5)
    scheduler.start()
    scheduler.add("p-1", interval_sec=0.2, reregister=lambda: reregistered.append(1))
    wait_until(lambda: len(reregistered) >= 2, timeout=5.0, message="re-registration")
    scheduler.stop()


def test_unreachable_registry_backs_off_then_recovers():
    registry = ScriptedRegistry()
    registry.mode = "down"
    scheduler = HeartbeatScheduler(registry, fraction=0.5)
    scheduler.start()
    scheduler.add("p-1", interval_sec=0.1, reregister=lambda: None)
    wait_until(lambda: registry.beats >= 2, timeout=5.0, message="first failures")

    # while down, the retry cadence stretches: count beats over a window
    before = registry.beats
    time.sleep(1.0)
    failures_per_sec = registry.beats - before
    assert failures_per_sec <= 3  # backed off well below the 20/s healthy cadence

    registry.mode = "ok"
    before = registry.beats
    wait_until(
        lambda: registry.beats - before >= 5, timeout=10.0, message="recovered cadence"
    )
    scheduler.stop()


def test_removed_client_stops_beating():
    registry = ScriptedRegistry()
    scheduler = HeartbeatScheduler(registry, fraction=0.5)
    scheduler.start()
    scheduler.add("p-1", interval_sec=0.1, reregister=lambda: None)
    wait_until(lambda: registry.beats >= 1, timeout=5.0, message="first beat")
    scheduler.remove("p-1")
    settled = registry.beats
    time.sleep(0.5)
    assert registry.beats <= settled + 1  # at most one in-flight beat after removal
