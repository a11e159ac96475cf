"""Tokenizer for the SQL subset."""

from __future__ import annotations

import re
from dataclasses import dataclass

from gridmon.errors import ParseError

KEYWORDS = {
    "create", "table", "primary", "key", "insert", "into", "values",
    "select", "from", "where", "and", "or", "as",
    "int", "real", "string", "timestamp",
}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>\d+(?:\.\d+)?(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<string>'(?:[^']|'')*')
  | (?P<op><>|<=|>=|[=<>(),.*+-])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # 'number' | 'ident' | 'keyword' | 'string' | 'op' | 'eof'
    text: str
    pos: int

    def is_keyword(self, word: str) -> bool:
        return self.kind == "keyword" and self.text.lower() == word


def tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    pos = 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        pos = m.end()
        if m.lastgroup == "ws":
            continue
        kind = m.lastgroup
        value = m.group()
        if kind == "ident" and value.lower() in KEYWORDS:
            kind = "keyword"
        tokens.append(Token(kind, value, m.start()))
    tokens.append(Token("eof", "", n))
    return tokens


def unquote_string(text: str) -> str:
    """Strip quotes from a string token and undo '' escaping."""
    return text[1:-1].replace("''", "'")


def quote_string(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"
