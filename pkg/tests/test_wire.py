import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gridmon import relq, wire
from gridmon.core import Tuple, validate_tuple
from gridmon.errors import ValidationError

TABLE = relq.parse_create_table(
    "CREATE TABLE Mix (name STRING(100), count INT, ratio REAL, seen TIMESTAMP, PRIMARY KEY (name))"
)


def make(name, count, ratio, seen, ts):
    return validate_tuple(
        TABLE, Tuple("Mix", {"name": name, "count": count, "ratio": ratio, "seen": seen}, ts)
    )


def test_roundtrip_basic():
    t = make("a", 1, 0.5, 99, 1234)
    line = wire.encode_tuple(t)
    assert line.endswith(b"\n")
    assert wire.decode_tuple(line, TABLE) == t


def test_encoding_is_stable():
    t = make("a", 1, 0.5, 99, 1234)
    assert wire.encode_tuple(t) == wire.encode_tuple(t)
    assert (
        wire.encode_tuple(t)
        == b'{"table":"Mix","name":"a","count":1,"ratio":0.5,"seen":99,"RgmaTimestamp":1234}\n'
    )


def test_decode_missing_field():
    line = b'{"table":"Mix","name":"a","count":1,"RgmaTimestamp":5}\n'
    with pytest.raises(ValidationError, match="missing column"):
        wire.decode_tuple(line, TABLE)


def test_decode_wrong_table():
    t = make("a", 1, 0.5, 99, 1234)
    other = relq.parse_create_table("CREATE TABLE Other (a INT, PRIMARY KEY (a))")
    with pytest.raises(ValidationError, match="expected Other"):
        wire.decode_tuple(wire.encode_tuple(t), other)


def test_decode_garbage():
    with pytest.raises(ValidationError, match="malformed"):
        wire.decode_tuple(b"not json\n", TABLE)


def test_newline_in_string_roundtrips():
    t = make("line1\nline2", 0, 0.0, 0, 1)
    line = wire.encode_tuple(t)
    assert line.count(b"\n") == 1  # embedded newline is escaped
    assert wire.decode_tuple(line, TABLE) == t


def test_comment_lines():
    assert wire.is_comment(b"# keepalive\n")
    assert not wire.is_comment(b'{"table":"Mix"}')


@settings(max_examples=300, deadline=None)
@given(
    st.text(max_size=50),
    st.integers(-(2**63), 2**63 - 1),
    st.floats(allow_nan=False, allow_infinity=False),
    st.integers(0, 2**62),
    st.integers(0, 2**62),
)
def test_roundtrip_fuzz(name, count, ratio, seen, ts):
    t = make(name[:100], count, ratio, seen, ts)
    assert wire.decode_tuple(wire.encode_tuple(t), TABLE) == t
    assert wire.tuple_from_json(wire.tuple_to_json(t), TABLE) == t
