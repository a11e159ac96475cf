"""Canonical tuple line encoding, used on the wire and in resilient logs.

One tuple per line: a flat JSON object with the table name first, the
declared columns in declaration order, then the timestamp column. Field
order is fixed so identical tuples encode to identical bytes across runs.
Lines starting with ``#`` are comments (stream keepalives) and carry no
tuple.
"""

from __future__ import annotations

import json

from gridmon.core import Tuple, validate_tuple
from gridmon.errors import ValidationError
from gridmon.relq.ast import TIMESTAMP_COLUMN, TableDef, ident_key

COMMENT_PREFIX = b"#"
KEEPALIVE_LINE = b"# keepalive\n"


def encode_tuple(t: Tuple) -> bytes:
    """Encode a validated tuple as one newline-terminated line."""
    if t.timestamp is None:
        raise ValidationError("cannot encode an unstamped tuple")
    obj: dict = {"table": t.table}
    for name, value in t.values.items():
        if ident_key(name) in ("table", ident_key(TIMESTAMP_COLUMN)):
            raise ValidationError(f"column name {name} collides with an envelope field")
        obj[name] = value
    obj[TIMESTAMP_COLUMN] = t.timestamp
    return json.dumps(obj, separators=(",", ":")).encode("utf-8") + b"\n"


def decode_tuple(line: bytes | str, table: TableDef) -> Tuple:
    """Decode and validate one line against the expected table definition."""
    if isinstance(line, bytes):
        line = line.decode("utf-8")
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"malformed tuple line: {exc}") from None
    if not isinstance(obj, dict):
        raise ValidationError("malformed tuple line: not an object")
    name = obj.pop("table", None)
    if not isinstance(name, str):
        raise ValidationError("tuple line missing table field")
    if ident_key(name) != ident_key(table.name):
        raise ValidationError(f"tuple line is for table {name}, expected {table.name}")
    ts = obj.pop(TIMESTAMP_COLUMN, None)
    if ts is None:
        raise ValidationError(f"tuple line missing {TIMESTAMP_COLUMN}")
    return validate_tuple(table, Tuple(name, obj, ts))


def is_comment(line: bytes | str) -> bool:
    if isinstance(line, str):
        return line.startswith("#")
    return line.startswith(COMMENT_PREFIX)


def tuple_to_json(t: Tuple) -> dict:
    """The same flat object as :func:`encode_tuple`, as a dict for HTTP bodies."""
    obj: dict = {"table": t.table}
    obj.update(t.values)
    obj[TIMESTAMP_COLUMN] = t.timestamp
    return obj


def tuple_from_json(obj: dict, table: TableDef) -> Tuple:
    data = dict(obj)
    name = data.pop("table", table.name)
    ts = data.pop(TIMESTAMP_COLUMN, None)
    return validate_tuple(table, Tuple(name if isinstance(name, str) else table.name, data, ts))
