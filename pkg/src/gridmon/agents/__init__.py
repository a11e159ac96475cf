"""Service hosting: HTTP agents for the registry, producer, consumer and
archiver engines, plus heartbeating and the streaming transport."""

from gridmon.agents.config import AgentConfig
from gridmon.agents.service import Agent

__all__ = ["Agent", "AgentConfig"]
