"""Execute a SELECT over in-memory tuple sets: single-table filters and
2-table equi-joins by nested loop. Row order follows store order, the
first-named table outermost.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from gridmon.core import Tuple
from gridmon.errors import BindError
from gridmon.relq import (
    Binder,
    ColumnRef,
    SelectQuery,
    TIMESTAMP_COLUMN,
    TableDef,
    Value,
    ident_key,
)


@dataclass
class ResultTable:
    columns: list[str]
    rows: list[list[Value]]
    warnings: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"columns": self.columns, "rows": self.rows, "warnings": self.warnings}

    @classmethod
    def from_json(cls, obj: dict) -> "ResultTable":
        return cls(
            columns=list(obj.get("columns", [])),
            rows=[list(r) for r in obj.get("rows", [])],
            warnings=list(obj.get("warnings", [])),
        )


def projection_refs(query: SelectQuery, defs: list[TableDef]) -> list[ColumnRef]:
    """The effective projection: STAR expands to declaration order plus the
    timestamp column, qualified when two tables are in play."""
    if query.projection is not None:
        return list(query.projection)
    refs: list[ColumnRef] = []
    if len(defs) == 1:
        for name in defs[0].column_names() + [TIMESTAMP_COLUMN]:
            refs.append(ColumnRef(name))
        return refs
    for table_ref, table in zip(query.tables, defs):
        qualifier = table_ref.alias if table_ref.alias is not None else table_ref.name
        for name in table.column_names() + [TIMESTAMP_COLUMN]:
            refs.append(ColumnRef(name, qualifier=qualifier))
    return refs


def execute_select(query: SelectQuery, sources: dict[str, TableDef | None], rows_of) -> ResultTable:
    """Run a parsed SELECT.

    ``sources`` maps canonical table name to its definition for every
    table this executor can touch; ``rows_of(table_name)`` yields that
    table's tuples.
    """
    defs: list[TableDef] = []
    for ref in query.tables:
        table = sources.get(ident_key(ref.name))
        if table is None:
            raise BindError(f"unknown table {ref.name}")
        defs.append(table)

    binder = Binder.for_query(query, {ident_key(d.name): d for d in defs})
    refs = projection_refs(query, defs)
    bound_refs = [binder.resolve(r) for r in refs]
    columns = [str(r) for r in refs]
    where = binder.bind_where(query.where) if query.where is not None else None

    if len(defs) == 1:
        rows = []
        for t in rows_of(defs[0].name):
            if where is None or where.evaluate(t):
                rows.append([t.get_value(b.column) for b in bound_refs])
        return ResultTable(columns, rows)

    if where is None or not where.references_cross_table():
        raise BindError("a 2-table query requires a cross-table equality in WHERE")
    outer: list[Tuple] = list(rows_of(defs[0].name))
    inner: list[Tuple] = list(rows_of(defs[1].name))
    rows = []
    for t1 in outer:
        for t2 in inner:
            pair = (t1, t2)
            if where.evaluate(*pair):
                rows.append([pair[b.slot].get_value(b.column) for b in bound_refs])
    return ResultTable(columns, rows)
