"""Canonical statement text: uppercase keywords, single spaces, full parens
around composite boolean nodes. Used for logging and golden files; parsing
the output reproduces the AST.
"""

from __future__ import annotations

from gridmon.relq.ast import (
    And,
    InsertStatement,
    Literal,
    Or,
    SelectQuery,
    TableDef,
    TableRef,
    Value,
    ViewPredicate,
    WhereExpr,
)
from gridmon.relq.lexer import quote_string


def unparse_literal(value: Value) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not literal values")
    if isinstance(value, str):
        return quote_string(value)
    return repr(value)


def unparse_where(expr: WhereExpr) -> str:
    if isinstance(expr, And):
        return f"({unparse_where(expr.left)} AND {unparse_where(expr.right)})"
    if isinstance(expr, Or):
        return f"({unparse_where(expr.left)} OR {unparse_where(expr.right)})"
    right = expr.right
    rhs = unparse_literal(right.value) if isinstance(right, Literal) else str(right)
    return f"{expr.left} {expr.op} {rhs}"


def unparse_create_table(table: TableDef) -> str:
    cols = ", ".join(f"{c.name} {c.type}" for c in table.columns)
    keys = ", ".join(table.defining_fields)
    return f"CREATE TABLE {table.name} ({cols}, PRIMARY KEY ({keys}))"


def unparse_insert(stmt: InsertStatement) -> str:
    cols = ", ".join(stmt.columns)
    rows = ", ".join("(" + ", ".join(unparse_literal(v) for v in row) + ")" for row in stmt.rows)
    return f"INSERT INTO {stmt.table} ({cols}) VALUES {rows}"


def _unparse_table_ref(ref: TableRef) -> str:
    return f"{ref.name} {ref.alias}" if ref.alias else ref.name


def unparse_select(query: SelectQuery) -> str:
    proj = "*" if query.projection is None else ", ".join(str(c) for c in query.projection)
    tables = ", ".join(_unparse_table_ref(t) for t in query.tables)
    text = f"SELECT {proj} FROM {tables}"
    if query.where is not None:
        text += f" WHERE {unparse_where(query.where)}"
    return text


def unparse_view_predicate(view: ViewPredicate) -> str:
    if view.is_whole_table:
        return ""
    body = " AND ".join(f"{col} = {unparse_literal(val)}" for col, val in view.conjuncts)
    return f"WHERE ({body})"
