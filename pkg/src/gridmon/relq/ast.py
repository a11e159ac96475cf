"""AST for the SQL subset: CREATE TABLE, INSERT, SELECT and view predicates.

Identifiers and keywords are case-insensitive; declared spellings are kept
for display and comparisons go through :func:`ident_key`. String literals
are single-quoted with ``''`` escaping. There are no NULLs: every column
of every tuple carries a value.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Union

from gridmon.errors import BindError

# Implicit, reserved timestamp column present on every tuple.
TIMESTAMP_COLUMN = "RgmaTimestamp"

Value = Union[int, float, str]

COMPARISON_OPS = ("=", "<>", "<", "<=", ">", ">=")


def ident_key(name: str) -> str:
    """Canonical (case-insensitive) form of an identifier."""
    return name.lower()


class QueryType(Enum):
    HISTORY = "history"
    LATEST = "latest"
    CONTINUOUS = "continuous"


class TypeKind(Enum):
    INT = "INT"
    REAL = "REAL"
    STRING = "STRING"
    TIMESTAMP = "TIMESTAMP"


@dataclass(frozen=True)
class ColumnType:
    """Declared column type; STRING carries its length bound."""

    kind: TypeKind
    length: int | None = None

    def __post_init__(self):
        if self.kind is TypeKind.STRING:
            if self.length is None or self.length < 1:
                raise ValueError("STRING length bound must be >= 1")
        elif self.length is not None:
            raise ValueError(f"{self.kind.value} takes no length")

    def __str__(self) -> str:
        if self.kind is TypeKind.STRING:
            return f"STRING({self.length})"
        return self.kind.value


INT = ColumnType(TypeKind.INT)
REAL = ColumnType(TypeKind.REAL)
TIMESTAMP = ColumnType(TypeKind.TIMESTAMP)


def string(length: int) -> ColumnType:
    return ColumnType(TypeKind.STRING, length)


@dataclass(frozen=True)
class Column:
    name: str
    type: ColumnType


@dataclass(frozen=True)
class TableDef:
    """A declared table: ordered columns plus the defining fields.

    Defining fields identify what a tuple measures. They are
    primary-key-like but never enforced as globally unique, and the
    implicit timestamp column is never one of them.
    """

    name: str
    columns: tuple[Column, ...]
    defining_fields: tuple[str, ...]

    def __post_init__(self):
        if not self.columns:
            raise ValueError(f"table {self.name}: no columns")
        seen: set[str] = set()
        for col in self.columns:
            key = ident_key(col.name)
            if key in seen:
                raise ValueError(f"table {self.name}: duplicate column {col.name}")
            if key == ident_key(TIMESTAMP_COLUMN):
                raise ValueError(f"table {self.name}: {TIMESTAMP_COLUMN} is reserved")
            seen.add(key)
        if not self.defining_fields:
            raise ValueError(f"table {self.name}: defining fields must be non-empty")
        for df in self.defining_fields:
            if ident_key(df) == ident_key(TIMESTAMP_COLUMN):
                raise ValueError(f"table {self.name}: {TIMESTAMP_COLUMN} cannot be a defining field")
            if ident_key(df) not in seen:
                raise ValueError(f"table {self.name}: defining field {df} is not a column")
        if len({ident_key(df) for df in self.defining_fields}) != len(self.defining_fields):
            raise ValueError(f"table {self.name}: duplicate defining field")

    def column(self, name: str) -> Column:
        """Resolve a column by name, including the implicit timestamp column."""
        key = ident_key(name)
        if key == ident_key(TIMESTAMP_COLUMN):
            return Column(TIMESTAMP_COLUMN, TIMESTAMP)
        for col in self.columns:
            if ident_key(col.name) == key:
                return col
        raise BindError(f"table {self.name} has no column {name}")

    def has_column(self, name: str) -> bool:
        try:
            self.column(name)
            return True
        except BindError:
            return False

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]

    def same_definition(self, other: "TableDef") -> bool:
        """Structural equality up to identifier case."""
        if ident_key(self.name) != ident_key(other.name):
            return False
        if len(self.columns) != len(other.columns):
            return False
        for a, b in zip(self.columns, other.columns):
            if ident_key(a.name) != ident_key(b.name) or a.type != b.type:
                return False
        return [ident_key(d) for d in self.defining_fields] == [
            ident_key(d) for d in other.defining_fields
        ]


@dataclass(frozen=True)
class ViewPredicate:
    """Conjunction of column=literal equalities; empty means the whole table."""

    conjuncts: tuple[tuple[str, Value], ...] = ()

    def __post_init__(self):
        seen: set[str] = set()
        for col, _ in self.conjuncts:
            key = ident_key(col)
            if key in seen:
                raise ValueError(f"view predicate repeats column {col}")
            seen.add(key)

    @property
    def is_whole_table(self) -> bool:
        return not self.conjuncts


@dataclass(frozen=True)
class ColumnRef:
    """A possibly qualified column reference (``t.a`` or ``a``)."""

    column: str
    qualifier: str | None = None

    def __str__(self) -> str:
        return f"{self.qualifier}.{self.column}" if self.qualifier else self.column


@dataclass(frozen=True)
class Literal:
    value: Value


@dataclass(frozen=True)
class Comparison:
    left: ColumnRef
    op: str
    right: Union[Literal, ColumnRef]

    def __post_init__(self):
        if self.op not in COMPARISON_OPS:
            raise ValueError(f"unknown comparison operator {self.op}")


@dataclass(frozen=True)
class And:
    left: "WhereExpr"
    right: "WhereExpr"


@dataclass(frozen=True)
class Or:
    left: "WhereExpr"
    right: "WhereExpr"


WhereExpr = Union[Comparison, And, Or]


@dataclass(frozen=True)
class TableRef:
    name: str
    alias: str | None = None

    def binds(self, qualifier: str) -> bool:
        key = ident_key(qualifier)
        if self.alias is not None:
            return ident_key(self.alias) == key
        return ident_key(self.name) == key


@dataclass(frozen=True)
class SelectQuery:
    """A parsed SELECT. ``projection=None`` means ``*``; at most 2 tables."""

    projection: tuple[ColumnRef, ...] | None
    tables: tuple[TableRef, ...]
    where: WhereExpr | None = None

    def __post_init__(self):
        if not 1 <= len(self.tables) <= 2:
            raise ValueError("a query names 1 or 2 tables")

    @property
    def is_join(self) -> bool:
        return len(self.tables) == 2


@dataclass(frozen=True)
class InsertStatement:
    table: str
    columns: tuple[str, ...]
    rows: tuple[tuple[Value, ...], ...]

    def __post_init__(self):
        seen: set[str] = set()
        for col in self.columns:
            key = ident_key(col)
            if key in seen:
                raise ValueError(f"INSERT repeats column {col}")
            seen.add(key)
        for row in self.rows:
            if len(row) != len(self.columns):
                raise ValueError(
                    f"INSERT values arity {len(row)} does not match {len(self.columns)} columns"
                )
        if not self.rows:
            raise ValueError("INSERT carries no rows")


def where_and(parts: list[WhereExpr]) -> WhereExpr | None:
    """Left-fold a conjunction; None for an empty list."""
    expr: WhereExpr | None = None
    for part in parts:
        expr = part if expr is None else And(expr, part)
    return expr


def cross_table_equalities(expr: WhereExpr | None) -> list[Comparison]:
    """Comparisons of the form ``t1.a = t2.b`` relating two different qualifiers."""
    found: list[Comparison] = []

    def walk(node: WhereExpr) -> None:
        if isinstance(node, (And, Or)):
            walk(node.left)
            walk(node.right)
            return
        if (
            isinstance(node.right, ColumnRef)
            and node.op == "="
            and node.left.qualifier is not None
            and node.right.qualifier is not None
            and ident_key(node.left.qualifier) != ident_key(node.right.qualifier)
        ):
            found.append(node)

    if expr is not None:
        walk(expr)
    return found
