import time

import pytest

from gridmon.agents import Agent, AgentConfig


def wait_until(predicate, timeout=10.0, interval=0.05, message="condition"):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        if predicate():
            return
        time.sleep(interval)
    raise AssertionError(f"timed out waiting for {message}")


@pytest.fixture
def registry_agent():
    agent = Agent(AgentConfig(), host_registry=True).start()
    yield agent
    agent.stop()


@pytest.fixture
def node_agent(registry_agent):
    agent = Agent(AgentConfig(registry_url=registry_agent.base_url)).start()
    yield agent
    agent.stop()
