"""Canonical unparse output must reparse to a structurally equal AST."""

from hypothesis import given, settings
from hypothesis import strategies as st

from gridmon import relq
from gridmon.relq import (
    And,
    Column,
    ColumnRef,
    Comparison,
    InsertStatement,
    Literal,
    Or,
    SelectQuery,
    TableDef,
    TableRef,
    ViewPredicate,
)
from gridmon.relq.lexer import KEYWORDS

_IDENT = st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,14}", fullmatch=True).filter(
    lambda s: s.lower() not in KEYWORDS and s.lower() not in ("rgmatimestamp", "table")
)

_COLTYPE = st.one_of(
    st.just(relq.INT),
    st.just(relq.REAL),
    st.just(relq.TIMESTAMP),
    st.integers(1, 500).map(relq.string),
)

_VALUE = st.one_of(
    st.integers(-(2**62), 2**62),
    st.floats(allow_nan=False, allow_infinity=False),
    st.text(max_size=20),
)


@st.composite
def table_defs(draw):
    names = draw(
        st.lists(_IDENT, min_size=1, max_size=6, unique_by=lambda s: s.lower())
    )
    columns = tuple(Column(n, draw(_COLTYPE)) for n in names)
    n_keys = draw(st.integers(1, len(names)))
    return TableDef(draw(_IDENT), columns, tuple(names[:n_keys]))


@st.composite
def insert_statements(draw):
    columns = draw(st.lists(_IDENT, min_size=1, max_size=5, unique_by=lambda s: s.lower()))
    n_rows = draw(st.integers(1, 4))
    rows = tuple(
        tuple(draw(_VALUE) for _ in columns) for _ in range(n_rows)
    )
    return InsertStatement(draw(_IDENT), tuple(columns), rows)


def comparisons(refs):
    return st.builds(
        Comparison,
        refs,
        st.sampled_from(["=", "<>", "<", "<=", ">", ">="]),
        st.one_of(_VALUE.map(Literal), refs),
    )


@st.composite
def select_queries(draw):
    table = draw(_IDENT)
    alias = draw(st.one_of(st.none(), _IDENT))
    qualifier = alias if alias is not None else table
    refs = st.builds(
        ColumnRef,
        _IDENT,
        st.one_of(st.none(), st.just(qualifier)),
    )
    projection = draw(
        st.one_of(st.none(), st.lists(refs, min_size=1, max_size=4).map(tuple))
    )
    where = draw(
        st.one_of(
            st.none(),
            st.recursive(
                comparisons(refs),
                lambda inner: st.one_of(
                    st.builds(And, inner, inner), st.builds(Or, inner, inner)
                ),
                max_leaves=6,
            ),
        )
    )
    return SelectQuery(projection, (TableRef(table, alias),), where)


@st.composite
def view_predicates(draw):
    columns = draw(st.lists(_IDENT, min_size=0, max_size=4, unique_by=lambda s: s.lower()))
    return ViewPredicate(tuple((c, draw(_VALUE)) for c in columns))


@settings(max_examples=200, deadline=None)
@given(table_defs())
def test_create_table_roundtrip(table):
    assert relq.parse_create_table(relq.unparse_create_table(table)) == table


@settings(max_examples=200, deadline=None)
@given(insert_statements())
def test_insert_roundtrip(stmt):
    assert relq.parse_insert(relq.unparse_insert(stmt)) == stmt


@settings(max_examples=300, deadline=None)
@given(select_queries())
def test_select_roundtrip(query):
    assert relq.parse_select(relq.unparse_select(query)) == query


@settings(max_examples=200, deadline=None)
@given(view_predicates())
def test_view_predicate_roundtrip(view):
    assert relq.parse_view_predicate(relq.unparse_view_predicate(view)) == view


def test_join_select_roundtrip():
    text = "SELECT s.uri, st.status FROM Service s, ServiceStatus st WHERE s.uri = st.uri"
    query = relq.parse_select(text)
    canonical = relq.unparse_select(query)
    assert relq.parse_select(canonical) == query
    assert canonical == text


def test_canonical_create_table_text():
    table = relq.parse_create_table("create table t(a int,b string(4),primary key(a, b))")
    assert relq.unparse_create_table(table) == "CREATE TABLE t (a INT, b STRING(4), PRIMARY KEY (a, b))"
