"""SQL-subset dialect: statement parsing, canonical unparsing, binding and
predicate evaluation. All functions here are pure and safe to call
concurrently.
"""

from gridmon.relq.ast import (
    And,
    Column,
    ColumnRef,
    ColumnType,
    Comparison,
    InsertStatement,
    Literal,
    Or,
    QueryType,
    SelectQuery,
    TableDef,
    TableRef,
    TypeKind,
    Value,
    ViewPredicate,
    WhereExpr,
    INT,
    REAL,
    TIMESTAMP,
    TIMESTAMP_COLUMN,
    ident_key,
    string,
    where_and,
)
from gridmon.relq.binding import (
    Binder,
    BoundWhere,
    bind_view,
    bind_where,
    compare,
    eval_where,
    literal_matches,
    predicate_consistent,
    view_matches,
)
from gridmon.relq.parser import (
    parse_create_table,
    parse_insert,
    parse_select,
    parse_view_predicate,
    parse_where,
)
from gridmon.relq.unparse import (
    unparse_create_table,
    unparse_insert,
    unparse_literal,
    unparse_select,
    unparse_view_predicate,
    unparse_where,
)

__all__ = [
    "And", "Binder", "BoundWhere", "Column", "ColumnRef", "ColumnType",
    "Comparison", "INT", "InsertStatement", "Literal", "Or", "QueryType",
    "REAL", "SelectQuery", "TIMESTAMP", "TIMESTAMP_COLUMN", "TableDef",
    "TableRef", "TypeKind", "Value", "ViewPredicate", "WhereExpr",
    "bind_view", "bind_where", "compare", "eval_where", "ident_key",
    "literal_matches", "parse_create_table", "parse_insert", "parse_select",
    "parse_view_predicate", "parse_where", "predicate_consistent", "string",
    "unparse_create_table", "unparse_insert", "unparse_literal",
    "unparse_select", "unparse_view_predicate", "unparse_where",
    "view_matches", "where_and",
]
