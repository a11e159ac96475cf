"""Shared vocabulary: producer kinds and the soft-state registry records.

Registry records describe producers and consumers, never data: endpoints,
table names, views and queries, plus the termination deadline that makes
the registration soft state. On the wire, views and queries travel as
canonical SQL text.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum

from gridmon.relq import (
    QueryType,
    SelectQuery,
    TableDef,
    ViewPredicate,
    parse_select,
    parse_view_predicate,
    unparse_select,
    unparse_view_predicate,
)


class ProducerKind(Enum):
    STREAM = "STREAM"
    RESILIENT_STREAM = "RESILIENT_STREAM"
    DATABASE = "DATABASE"
    LATEST = "LATEST"
    CANONICAL = "CANONICAL"

    @property
    def insertable(self) -> bool:
        return self is not ProducerKind.CANONICAL

    @property
    def streaming(self) -> bool:
        return self in (ProducerKind.STREAM, ProducerKind.RESILIENT_STREAM)


@dataclass(frozen=True)
class ProducerEntry:
    producer_id: str
    endpoint: str
    table: str
    view: ViewPredicate
    kind: ProducerKind
    termination_time: int

    def renewed(self, termination_time: int) -> "ProducerEntry":
        return replace(self, termination_time=termination_time)

    def to_json(self) -> dict:
        return {
            "producerId": self.producer_id,
            "endpoint": self.endpoint,
            "table": self.table,
            "view": unparse_view_predicate(self.view),
            "kind": self.kind.value,
            "terminationTime": self.termination_time,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ProducerEntry":
        return cls(
            producer_id=obj["producerId"],
            endpoint=obj["endpoint"],
            table=obj["table"],
            view=parse_view_predicate(obj.get("view", "")),
            kind=ProducerKind(obj["kind"]),
            termination_time=int(obj.get("terminationTime", 0)),
        )


@dataclass(frozen=True)
class ConsumerEntry:
    consumer_id: str
    endpoint: str
    query: SelectQuery
    query_type: QueryType
    termination_time: int

    def renewed(self, termination_time: int) -> "ConsumerEntry":
        return replace(self, termination_time=termination_time)

    def to_json(self) -> dict:
        return {
            "consumerId": self.consumer_id,
            "endpoint": self.endpoint,
            "query": unparse_select(self.query),
            "queryType": self.query_type.value,
            "terminationTime": self.termination_time,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "ConsumerEntry":
        return cls(
            consumer_id=obj["consumerId"],
            endpoint=obj["endpoint"],
            query=parse_select(obj["query"]),
            query_type=QueryType(obj["queryType"]),
            termination_time=int(obj.get("terminationTime", 0)),
        )


@dataclass(frozen=True)
class SchemaEntry:
    table: TableDef
    created_at: int
