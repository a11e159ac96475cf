"""Timestamped tuple model and the latest-replacement merge.

Every measurement carries a timestamp, held in the implicit column
``RgmaTimestamp`` (UTC milliseconds). The defining fields of a table say
*what* is being measured; a latest merge keeps, per defining key, the
record with the greatest timestamp, a new record replacing an old one
whose timestamp is more recent or the same.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Iterable, Sequence

from gridmon.errors import ValidationError
from gridmon.relq.ast import (
    ColumnRef,
    TIMESTAMP_COLUMN,
    TableDef,
    TypeKind,
    Value,
    ident_key,
)

DefiningKey = tuple[Value, ...]


def now_ms() -> int:
    return int(time.time() * 1000)


@dataclass(frozen=True)
class Tuple:
    """One timestamped row of a table.

    ``values`` covers every declared column (keys use the declared
    spelling once validated); ``timestamp`` is the implicit column.
    Instances are treated as immutable.
    """

    table: str
    values: dict[str, Value]
    timestamp: int | None = None

    def get_value(self, column: str) -> Value:
        key = ident_key(column)
        if key == ident_key(TIMESTAMP_COLUMN):
            if self.timestamp is None:
                raise ValidationError(f"tuple for {self.table} has no timestamp")
            return self.timestamp
        for name, value in self.values.items():
            if ident_key(name) == key:
                return value
        raise ValidationError(f"tuple for {self.table} has no column {column}")

    def with_timestamp(self, ts: int) -> "Tuple":
        return Tuple(self.table, dict(self.values), ts)


@dataclass(frozen=True)
class TupleBatch:
    """An ordered vector of tuples for one table; order is publication order."""

    table: str
    tuples: tuple[Tuple, ...]

    def __post_init__(self):
        if not self.tuples:
            raise ValueError("a batch carries at least one tuple")
        for t in self.tuples:
            if ident_key(t.table) != ident_key(self.table):
                raise ValueError(f"batch for {self.table} contains a tuple for {t.table}")


_INT64_MIN = -(2**63)
_INT64_MAX = 2**63 - 1


def _value_ok(value: Value, kind: TypeKind) -> bool:
    if isinstance(value, bool):
        return False
    if kind is TypeKind.STRING:
        return isinstance(value, str)
    if kind is TypeKind.REAL:
        return isinstance(value, (int, float))
    return isinstance(value, int) and _INT64_MIN <= value <= _INT64_MAX


def validate_tuple(table: TableDef, t: Tuple, clock=now_ms) -> Tuple:
    """Check completeness and types; stamp the receiving clock if needed.

    Returns a normalized tuple whose value keys use the declared
    spellings in declaration order. A tuple without a timestamp gets the
    agent's current clock, so every accepted tuple is stamped.
    """
    if ident_key(t.table) != ident_key(table.name):
        raise ValidationError(f"tuple for {t.table} validated against table {table.name}")
    by_key: dict[str, Value] = {}
    for name, value in t.values.items():
        key = ident_key(name)
        if key in by_key:
            raise ValidationError(f"duplicate column {name}")
        by_key[key] = value

    timestamp = t.timestamp
    ts_key = ident_key(TIMESTAMP_COLUMN)
    if ts_key in by_key:
        explicit = by_key.pop(ts_key)
        if not isinstance(explicit, int) or isinstance(explicit, bool):
            raise ValidationError(f"{TIMESTAMP_COLUMN} must be an integer, got {explicit!r}")
        if timestamp is not None and timestamp != explicit:
            raise ValidationError("conflicting timestamps supplied")
        timestamp = explicit
    if timestamp is None:
        timestamp = clock()
    elif not isinstance(timestamp, int) or isinstance(timestamp, bool):
        raise ValidationError(f"timestamp must be an integer, got {timestamp!r}")

    normalized: dict[str, Value] = {}
    for col in table.columns:
        key = ident_key(col.name)
        if key not in by_key:
            raise ValidationError(f"missing column {col.name}")
        value = by_key.pop(key)
        if not _value_ok(value, col.type.kind):
            raise ValidationError(f"column {col.name} expects {col.type}, got {value!r}")
        if col.type.kind is TypeKind.REAL and isinstance(value, int):
            value = float(value)
        if (
            col.type.kind is TypeKind.STRING
            and col.type.length is not None
            and len(value) > col.type.length
        ):
            raise ValidationError(
                f"column {col.name} bounded at {col.type.length} characters, got {len(value)}"
            )
        normalized[col.name] = value
    if by_key:
        unknown = next(iter(by_key))
        raise ValidationError(f"unknown column {unknown}")
    return Tuple(table.name, normalized, timestamp)


def defining_key(t: Tuple, table: TableDef) -> DefiningKey:
    """Values of the defining fields, in declaration order of the key."""
    return tuple(t.get_value(name) for name in table.defining_fields)


def latest_merge(tuples: Iterable[Tuple], table: TableDef) -> list[Tuple]:
    """At most one tuple per defining key: the one with the greatest
    timestamp, a tie going to the later tuple in input order."""
    survivors: dict[DefiningKey, Tuple] = {}
    for t in tuples:
        if t.timestamp is None:
            raise ValidationError("latest merge needs stamped tuples")
        key = defining_key(t, table)
        current = survivors.get(key)
        if current is None or t.timestamp >= current.timestamp:
            survivors[key] = t
    return list(survivors.values())


def project(t: Tuple, projection: Sequence[ColumnRef] | None, table: TableDef) -> list[Value]:
    """Values in projection order; STAR is declaration order then the timestamp."""
    if projection is None:
        return [t.get_value(c.name) for c in table.columns] + [t.get_value(TIMESTAMP_COLUMN)]
    return [t.get_value(ref.column) for ref in projection]


def projection_columns(projection: Sequence[ColumnRef] | None, table: TableDef) -> list[str]:
    if projection is None:
        return table.column_names() + [TIMESTAMP_COLUMN]
    return [table.column(ref.column).name for ref in projection]
