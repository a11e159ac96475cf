"""Resolve column references against table definitions and evaluate predicates.

Evaluation is two-valued: there are no NULLs, so every comparison on a
bound expression yields True or False. ``predicate_consistent`` is the
three-valued variant the mediator uses to prune producers, and it is
deliberately conservative: only a provable contradiction returns False.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

from gridmon.errors import BindError
from gridmon.relq.ast import (
    And,
    ColumnRef,
    ColumnType,
    Comparison,
    Literal,
    Or,
    SelectQuery,
    TableDef,
    TypeKind,
    Value,
    ViewPredicate,
    WhereExpr,
    ident_key,
)

_NUMERIC = (TypeKind.INT, TypeKind.REAL, TypeKind.TIMESTAMP)


def literal_matches(value: Value, ctype: ColumnType) -> bool:
    if isinstance(value, bool):
        return False
    if ctype.kind is TypeKind.STRING:
        return isinstance(value, str)
    if ctype.kind is TypeKind.REAL:
        return isinstance(value, (int, float))
    return isinstance(value, int)


def compare(left: Value, op: str, right: Value) -> bool:
    if op == "=":
        return left == right
    if op == "<>":
        return left != right
    if op == "<":
        return left < right
    if op == "<=":
        return left <= right
    if op == ">":
        return left > right
    return left >= right


@dataclass(frozen=True)
class BoundRef:
    """A resolved column: which table slot and the declared spelling."""

    slot: int
    column: str
    type: ColumnType


@dataclass(frozen=True)
class BoundComparison:
    left: BoundRef
    op: str
    right: Union[BoundRef, Literal]


BoundNode = Union[BoundComparison, "BoundAnd", "BoundOr"]


@dataclass(frozen=True)
class BoundAnd:
    left: BoundNode
    right: BoundNode


@dataclass(frozen=True)
class BoundOr:
    left: BoundNode
    right: BoundNode


def _read(row, column: str) -> Value:
    getter = getattr(row, "get_value", None)
    if getter is not None:
        return getter(column)
    return row[column]


@dataclass(frozen=True)
class BoundWhere:
    root: BoundNode

    def evaluate(self, *rows) -> bool:
        return self._eval(self.root, rows)

    def _eval(self, node: BoundNode, rows: Sequence) -> bool:
        if isinstance(node, BoundAnd):
            return self._eval(node.left, rows) and self._eval(node.right, rows)
        if isinstance(node, BoundOr):
            return self._eval(node.left, rows) or self._eval(node.right, rows)
        left = _read(rows[node.left.slot], node.left.column)
        if isinstance(node.right, Literal):
            right = node.right.value
        else:
            right = _read(rows[node.right.slot], node.right.column)
        return compare(left, node.op, right)

    def references_cross_table(self) -> bool:
        found = False

        def walk(node: BoundNode) -> None:
            nonlocal found
            if isinstance(node, (BoundAnd, BoundOr)):
                walk(node.left)
                walk(node.right)
            elif (
                isinstance(node.right, BoundRef)
                and node.op == "="
                and node.left.slot != node.right.slot
            ):
                found = True

        walk(self.root)
        return found


class Binder:
    """Binds expressions against an ordered list of (alias, TableDef) pairs."""

    def __init__(self, tables: Sequence[tuple[str, TableDef]]):
        self.tables = [(ident_key(alias), table) for alias, table in tables]

    @classmethod
    def for_query(cls, query: SelectQuery, defs: Mapping[str, TableDef]) -> "Binder":
        pairs = []
        for ref in query.tables:
            table = defs.get(ident_key(ref.name))
            if table is None:
                raise BindError(f"unknown table {ref.name}")
            pairs.append((ref.alias if ref.alias is not None else ref.name, table))
        return cls(pairs)

    def resolve(self, ref: ColumnRef) -> BoundRef:
        if ref.qualifier is not None:
            key = ident_key(ref.qualifier)
            for slot, (alias, table) in enumerate(self.tables):
                if alias == key:
                    col = table.column(ref.column)
                    return BoundRef(slot, col.name, col.type)
            raise BindError(f"unknown qualifier {ref.qualifier}")
        matches = [
            (slot, table) for slot, (_, table) in enumerate(self.tables) if table.has_column(ref.column)
        ]
        if not matches:
            raise BindError(f"unknown column {ref.column}")
        if len(matches) > 1:
            raise BindError(f"ambiguous column {ref.column}, qualify it")
        slot, table = matches[0]
        col = table.column(ref.column)
        return BoundRef(slot, col.name, col.type)

    def bind_where(self, expr: WhereExpr) -> BoundWhere:
        return BoundWhere(self._bind(expr))

    def _bind(self, expr: WhereExpr) -> BoundNode:
        if isinstance(expr, And):
            return BoundAnd(self._bind(expr.left), self._bind(expr.right))
        if isinstance(expr, Or):
            return BoundOr(self._bind(expr.left), self._bind(expr.right))
        left = self.resolve(expr.left)
        if isinstance(expr.right, ColumnRef):
            right: Union[BoundRef, Literal] = self.resolve(expr.right)
            lk, rk = left.type.kind, right.type.kind
            if not (lk == rk or (lk in _NUMERIC and rk in _NUMERIC)):
                raise BindError(f"cannot compare {left.column} ({lk.value}) with {right.column} ({rk.value})")
        else:
            if not literal_matches(expr.right.value, left.type):
                raise BindError(
                    f"literal {expr.right.value!r} does not match column {left.column} ({left.type})"
                )
            right = expr.right
        return BoundComparison(left, expr.op, right)


def bind_where(expr: WhereExpr, tables: Sequence[tuple[str, TableDef]]) -> BoundWhere:
    return Binder(tables).bind_where(expr)


def eval_where(expr: WhereExpr, rows, tables: Sequence[tuple[str, TableDef]]) -> bool:
    """Bind and evaluate in one go. ``rows`` is one row or a pair for joins."""
    if not isinstance(rows, (tuple, list)):
        rows = (rows,)
    return bind_where(expr, tables).evaluate(*rows)


def bind_view(view: ViewPredicate, table: TableDef) -> dict[str, Value]:
    """Validate a view against its table; returns canonical column -> value."""
    bound: dict[str, Value] = {}
    for name, value in view.conjuncts:
        col = table.column(name)  # BindError if unknown
        if not literal_matches(value, col.type):
            raise BindError(f"view literal {value!r} does not match column {col.name} ({col.type})")
        if col.type.kind is TypeKind.STRING and isinstance(value, str) and col.type.length is not None:
            if len(value) > col.type.length:
                raise BindError(f"view literal {value!r} exceeds {col.name} length bound")
        bound[ident_key(col.name)] = value
    return bound


def view_matches(view_bound: dict[str, Value], row) -> bool:
    """Does a tuple lie inside the producer's declared slice?"""
    for key, expected in view_bound.items():
        if _read_by_key(row, key) != expected:
            return False
    return True


def _read_by_key(row, key: str) -> Value:
    getter = getattr(row, "get_value", None)
    if getter is not None:
        return getter(key)
    for name, value in row.items():
        if ident_key(name) == key:
            return value
    raise KeyError(key)


def _same_category(a: Value, b: Value) -> bool:
    return isinstance(a, str) == isinstance(b, str)


def predicate_consistent(
    view: ViewPredicate,
    where: WhereExpr | None,
    table: TableDef,
    aliases: set[str] | None = None,
) -> bool:
    """False only when view AND where is provably unsatisfiable.

    The view's equalities are substituted into the where clause and the
    result folded with three-valued logic; anything not provably false,
    including comparisons on columns the view does not bind or on other
    tables of a join, counts as consistent. A producer is never dropped
    on a doubt.
    """
    if where is None or view.is_whole_table:
        return True
    names = {ident_key(table.name)}
    if aliases:
        names |= {ident_key(a) for a in aliases}
    bindings = {ident_key(col): value for col, value in view.conjuncts}

    def known(ref: ColumnRef) -> Value | None:
        if ref.qualifier is not None and ident_key(ref.qualifier) not in names:
            return None
        return bindings.get(ident_key(ref.column))

    def fold(node: WhereExpr) -> bool | None:
        if isinstance(node, And):
            left, right = fold(node.left), fold(node.right)
            if left is False or right is False:
                return False
            if left is True and right is True:
                return True
            return None
        if isinstance(node, Or):
            left, right = fold(node.left), fold(node.right)
            if left is True or right is True:
                return True
            if left is False and right is False:
                return False
            return None
        left_val = known(node.left)
        if left_val is None:
            return None
        if isinstance(node.right, Literal):
            right_val: Value | None = node.right.value
        else:
            right_val = known(node.right)
        if right_val is None:
            return None
        if not _same_category(left_val, right_val):
            return None
        return compare(left_val, node.op, right_val)

    return fold(where) is not False
