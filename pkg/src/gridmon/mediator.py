"""Query planning: which producers serve a query, and how results combine.

The kind matrix is deliberately narrow, one query type per producer kind,
except that an on-demand producer answers both history and latest
queries. History results concatenate (duplicates are meaningful: there is
no global key), latest results merge by defining key, continuous results
interleave as they arrive preserving per-producer order.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from gridmon.core import Tuple, latest_merge
from gridmon.model import ProducerEntry, ProducerKind
from gridmon.relq import (
    QueryType,
    SelectQuery,
    TableDef,
    ident_key,
    predicate_consistent,
)


class CombineMode(Enum):
    UNION_ALL = "UNION_ALL"
    LATEST_MERGE = "LATEST_MERGE"
    INTERLEAVE = "INTERLEAVE"


_COMBINE_FOR = {
    QueryType.HISTORY: CombineMode.UNION_ALL,
    QueryType.LATEST: CombineMode.LATEST_MERGE,
    QueryType.CONTINUOUS: CombineMode.INTERLEAVE,
}

_SERVES = {
    ProducerKind.DATABASE: {QueryType.HISTORY},
    ProducerKind.LATEST: {QueryType.LATEST},
    ProducerKind.STREAM: {QueryType.CONTINUOUS},
    ProducerKind.RESILIENT_STREAM: {QueryType.CONTINUOUS},
    ProducerKind.CANONICAL: {QueryType.HISTORY, QueryType.LATEST},
}


def serves(kind: ProducerKind, query_type: QueryType) -> bool:
    """The full 5 x 3 kind/query-type matrix."""
    return query_type in _SERVES[kind]


@dataclass(frozen=True)
class PlanTarget:
    """One producer engine to contact. Joins need the engine to hold both
    tables, so a target groups that endpoint's registry entries."""

    endpoint: str
    entries: tuple[ProducerEntry, ...]

    @property
    def kind(self) -> ProducerKind:
        return self.entries[0].kind


@dataclass(frozen=True)
class QueryPlan:
    query_type: QueryType
    targets: tuple[PlanTarget, ...]
    combine: CombineMode


def query_aliases(query: SelectQuery, table: str) -> set[str]:
    """Qualifiers in the query that denote the given table."""
    names = {ident_key(table)}
    for ref in query.tables:
        if ident_key(ref.name) == ident_key(table) and ref.alias is not None:
            names.add(ref.alias)
    return names


def eligible(
    entry: ProducerEntry, query: SelectQuery, query_type: QueryType, table: TableDef
) -> bool:
    if not serves(entry.kind, query_type):
        return False
    if ident_key(entry.table) not in {ident_key(t.name) for t in query.tables}:
        return False
    return predicate_consistent(
        entry.view, query.where, table, aliases=query_aliases(query, entry.table)
    )


def plan(
    query: SelectQuery,
    query_type: QueryType,
    registry_view: list[ProducerEntry],
    defs: dict[str, TableDef],
) -> QueryPlan:
    """Build the plan from registry lookup results.

    ``defs`` maps canonical table name to definition for the query's
    tables. An empty plan is valid: it means an empty result, or a stream
    that may populate later via registry notifications.
    """
    combine = _COMBINE_FOR[query_type]
    filtered = [
        e
        for e in registry_view
        if eligible(e, query, query_type, defs[ident_key(e.table)])
    ]
    if not query.is_join:
        targets = tuple(PlanTarget(e.endpoint, (e,)) for e in filtered)
        return QueryPlan(query_type, targets, combine)

    # joins run on a single engine that publishes both tables
    wanted = {ident_key(t.name) for t in query.tables}
    by_endpoint: dict[str, list[ProducerEntry]] = {}
    for e in filtered:
        if e.kind is ProducerKind.DATABASE:
            by_endpoint.setdefault(e.endpoint, []).append(e)
    targets = tuple(
        PlanTarget(endpoint, tuple(entries))
        for endpoint, entries in by_endpoint.items()
        if {ident_key(e.table) for e in entries} >= wanted
    )
    return QueryPlan(query_type, targets, combine)


@dataclass
class CombinedTuples:
    """Batch combination outcome for history/latest queries."""

    tuples: list[Tuple]
    warnings: list[str]


def combine(
    plan_: QueryPlan,
    per_target: list[tuple[PlanTarget, list[Tuple] | Exception]],
    table: TableDef | None = None,
) -> CombinedTuples:
    """Fold per-producer tuple lists according to the plan's combine mode.

    A failed target becomes a warning, not a query failure: monitoring
    consumers prefer partial data to none. Interleaving is a streaming
    concern and is handled by the consumer engine, not here.
    """
    if plan_.combine is CombineMode.INTERLEAVE:
        raise ValueError("continuous results interleave in the stream handler")
    collected: list[Tuple] = []
    warnings: list[str] = []
    for target, outcome in per_target:
        if isinstance(outcome, Exception):
            warnings.append(f"{target.endpoint}: {outcome}")
        else:
            collected.extend(outcome)
    if plan_.combine is CombineMode.LATEST_MERGE:
        if table is None:
            raise ValueError("latest merge needs the table definition")
        collected = latest_merge(collected, table)
    return CombinedTuples(collected, warnings)
