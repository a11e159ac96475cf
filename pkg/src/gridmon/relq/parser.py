"""Recursive-descent parser for the three statement forms and view predicates.

Grammar summary::

    create  := CREATE TABLE ident ( coldef {, coldef} , PRIMARY KEY ( ident {, ident} ) )
    coldef  := ident (INT | REAL | TIMESTAMP | STRING ( number ))
    insert  := INSERT INTO ident ( ident {, ident} ) VALUES rowlit {, rowlit}
    rowlit  := ( literal {, literal} )
    select  := SELECT proj FROM tref [, tref] [WHERE orexpr]
    proj    := * | colref {, colref}
    tref    := ident [[AS] ident]
    orexpr  := andexpr {OR andexpr}
    andexpr := cmp {AND cmp}
    cmp     := ( orexpr ) | colref op (literal | colref)
    view    := <empty> | WHERE ( eq {AND eq} ) | WHERE eq {AND eq}
    eq      := ident = literal

Consumer WHERE clauses get the full comparison grammar; producer view
predicates accept only conjunctions of equalities.
"""

from __future__ import annotations

from gridmon.errors import ParseError
from gridmon.relq.ast import (
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
    Value,
    ViewPredicate,
    WhereExpr,
    ident_key,
    string as string_type,
    INT,
    REAL,
    TIMESTAMP,
)
from gridmon.relq.lexer import Token, tokenize, unquote_string


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    # token plumbing

    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def at_keyword(self, word: str) -> bool:
        return self.peek().is_keyword(word)

    def accept_keyword(self, word: str) -> bool:
        if self.at_keyword(word):
            self.advance()
            return True
        return False

    def expect_keyword(self, word: str) -> None:
        tok = self.advance()
        if not tok.is_keyword(word):
            raise ParseError(f"expected {word.upper()}, found {tok.text or 'end of input'}", tok.pos)

    def accept_op(self, op: str) -> bool:
        tok = self.peek()
        if tok.kind == "op" and tok.text == op:
            self.advance()
            return True
        return False

    def expect_op(self, op: str) -> None:
        tok = self.advance()
        if tok.kind != "op" or tok.text != op:
            raise ParseError(f"expected {op!r}, found {tok.text or 'end of input'}", tok.pos)

    def expect_ident(self, what: str = "identifier") -> str:
        tok = self.advance()
        if tok.kind != "ident":
            raise ParseError(f"expected {what}, found {tok.text or 'end of input'}", tok.pos)
        return tok.text

    def expect_end(self) -> None:
        tok = self.peek()
        if tok.kind != "eof":
            raise ParseError(f"unexpected trailing input {tok.text!r}", tok.pos)

    # literals

    def parse_literal(self) -> Value:
        tok = self.advance()
        negative = False
        if tok.kind == "op" and tok.text in ("-", "+"):
            negative = tok.text == "-"
            tok = self.advance()
            if tok.kind != "number":
                raise ParseError("expected a number after sign", tok.pos)
        if tok.kind == "number":
            if "." in tok.text or "e" in tok.text or "E" in tok.text:
                num: Value = float(tok.text)
            else:
                num = int(tok.text)
            return -num if negative else num
        if tok.kind == "string":
            return unquote_string(tok.text)
        raise ParseError(f"expected a literal, found {tok.text or 'end of input'}", tok.pos)

    # CREATE TABLE

    def parse_create_table(self) -> TableDef:
        self.expect_keyword("create")
        self.expect_keyword("table")
        name = self.expect_ident("table name")
        self.expect_op("(")
        columns: list[Column] = []
        defining: tuple[str, ...] | None = None
        while True:
            if self.at_keyword("primary"):
                self.advance()
                self.expect_keyword("key")
                self.expect_op("(")
                fields = [self.expect_ident("defining column")]
                while self.accept_op(","):
                    fields.append(self.expect_ident("defining column"))
                self.expect_op(")")
                defining = tuple(fields)
                break
            columns.append(self.parse_column_def())
            if not self.accept_op(","):
                break
        self.expect_op(")")
        self.expect_end()
        if defining is None:
            raise ParseError("CREATE TABLE requires a PRIMARY KEY clause naming the defining fields", self.peek().pos)
        try:
            return TableDef(name, tuple(columns), defining)
        except ValueError as exc:
            raise ParseError(str(exc), self.peek().pos) from None

    def parse_column_def(self) -> Column:
        name = self.expect_ident("column name")
        tok = self.advance()
        if tok.is_keyword("int"):
            ctype = INT
        elif tok.is_keyword("real"):
            ctype = REAL
        elif tok.is_keyword("timestamp"):
            ctype = TIMESTAMP
        elif tok.is_keyword("string"):
            self.expect_op("(")
            length_tok = self.advance()
            if length_tok.kind != "number" or not length_tok.text.isdigit():
                raise ParseError("STRING length must be an integer", length_tok.pos)
            length = int(length_tok.text)
            if length < 1:
                raise ParseError("STRING length must be >= 1", length_tok.pos)
            self.expect_op(")")
            ctype = string_type(length)
        else:
            raise ParseError(f"unknown column type {tok.text or 'end of input'}", tok.pos)
        return Column(name, ctype)

    # INSERT

    def parse_insert(self) -> InsertStatement:
        self.expect_keyword("insert")
        self.expect_keyword("into")
        table = self.expect_ident("table name")
        self.expect_op("(")
        columns = [self.expect_ident("column name")]
        while self.accept_op(","):
            columns.append(self.expect_ident("column name"))
        self.expect_op(")")
        self.expect_keyword("values")
        rows: list[tuple[Value, ...]] = []
        while True:
            row_pos = self.peek().pos
            self.expect_op("(")
            values = [self.parse_literal()]
            while self.accept_op(","):
                values.append(self.parse_literal())
            self.expect_op(")")
            if len(values) != len(columns):
                raise ParseError(
                    f"VALUES group has {len(values)} values for {len(columns)} columns", row_pos
                )
            rows.append(tuple(values))
            if not self.accept_op(","):
                break
        self.expect_end()
        try:
            return InsertStatement(table, tuple(columns), tuple(rows))
        except ValueError as exc:
            raise ParseError(str(exc), self.peek().pos) from None

    # SELECT

    def parse_select(self) -> SelectQuery:
        self.expect_keyword("select")
        projection: tuple[ColumnRef, ...] | None
        if self.accept_op("*"):
            projection = None
        else:
            refs = [self.parse_column_ref()]
            while self.accept_op(","):
                refs.append(self.parse_column_ref())
            projection = tuple(refs)
        self.expect_keyword("from")
        tables = [self.parse_table_ref()]
        while self.accept_op(","):
            if len(tables) == 2:
                raise ParseError("at most 2 tables per query", self.peek().pos)
            tables.append(self.parse_table_ref())
        where: WhereExpr | None = None
        if self.accept_keyword("where"):
            where = self.parse_or_expr()
        self.expect_end()
        if len(tables) == 2:
            if ident_key(_alias_of(tables[0])) == ident_key(_alias_of(tables[1])):
                raise ParseError("join tables need distinct names or aliases", self.peek().pos)
            if not _has_column_equality(where):
                raise ParseError("a 2-table query requires a cross-table equality in WHERE", self.peek().pos)
        return SelectQuery(projection, tuple(tables), where)

    def parse_table_ref(self) -> TableRef:
        name = self.expect_ident("table name")
        alias: str | None = None
        if self.accept_keyword("as"):
            alias = self.expect_ident("alias")
        elif self.peek().kind == "ident":
            alias = self.advance().text
        return TableRef(name, alias)

    def parse_column_ref(self) -> ColumnRef:
        first = self.expect_ident("column name")
        if self.accept_op("."):
            return ColumnRef(self.expect_ident("column name"), qualifier=first)
        return ColumnRef(first)

    def parse_or_expr(self) -> WhereExpr:
        expr = self.parse_and_expr()
        while self.accept_keyword("or"):
            expr = Or(expr, self.parse_and_expr())
        return expr

    def parse_and_expr(self) -> WhereExpr:
        expr = self.parse_comparison()
        while self.accept_keyword("and"):
            expr = And(expr, self.parse_comparison())
        return expr

    def parse_comparison(self) -> WhereExpr:
        if self.accept_op("("):
            inner = self.parse_or_expr()
            self.expect_op(")")
            return inner
        left = self.parse_column_ref()
        tok = self.advance()
        if tok.kind != "op" or tok.text not in ("=", "<>", "<", "<=", ">", ">="):
            raise ParseError(f"expected a comparison operator, found {tok.text or 'end of input'}", tok.pos)
        op = tok.text
        nxt = self.peek()
        if nxt.kind == "ident":
            return Comparison(left, op, self.parse_column_ref())
        return Comparison(left, op, Literal(self.parse_literal()))

    # view predicates

    def parse_view_predicate(self) -> ViewPredicate:
        if self.peek().kind == "eof":
            return ViewPredicate()
        self.expect_keyword("where")
        parenthesised = self.accept_op("(")
        conjuncts = [self.parse_view_equality()]
        while self.accept_keyword("and"):
            conjuncts.append(self.parse_view_equality())
        if parenthesised:
            self.expect_op(")")
        self.expect_end()
        try:
            return ViewPredicate(tuple(conjuncts))
        except ValueError as exc:
            raise ParseError(str(exc), self.peek().pos) from None

    def parse_view_equality(self) -> tuple[str, Value]:
        column = self.expect_ident("column name")
        tok = self.advance()
        if tok.kind != "op" or tok.text != "=":
            raise ParseError("view predicates allow only = comparisons joined by AND", tok.pos)
        return column, self.parse_literal()


def _alias_of(ref: TableRef) -> str:
    return ref.alias if ref.alias is not None else ref.name


def _has_column_equality(expr: WhereExpr | None) -> bool:
    """At least one column = column comparison (the join condition candidate)."""
    if expr is None:
        return False
    if isinstance(expr, (And, Or)):
        return _has_column_equality(expr.left) or _has_column_equality(expr.right)
    return isinstance(expr, Comparison) and expr.op == "=" and isinstance(expr.right, ColumnRef)


def parse_create_table(text: str) -> TableDef:
    return _Parser(text).parse_create_table()


def parse_insert(text: str) -> InsertStatement:
    return _Parser(text).parse_insert()


def parse_select(text: str) -> SelectQuery:
    return _Parser(text).parse_select()


def parse_view_predicate(text: str) -> ViewPredicate:
    return _Parser(text).parse_view_predicate()


def parse_where(text: str) -> WhereExpr:
    """A bare boolean expression, as used by cleanup rules and subscriptions."""
    parser = _Parser(text)
    expr = parser.parse_or_expr()
    parser.expect_end()
    return expr
