import pytest

from heph import docio
from heph.errors import ParseError, SchemaError


def test_round_trip_preserves_order_and_values():
    doc = {"schema": "x/1", "b": 2, "a": [1, 2.5, "s"], "nested": {"k": None}}
    again = docio.loads(docio.dumps(doc))
    assert again == doc
    assert list(again.keys()) == list(doc.keys())


def test_rejects_anchors_and_aliases():
    with pytest.raises(ParseError):
        docio.loads("a: &x 1\nb: *x\n")


def test_rejects_custom_tags():
    with pytest.raises(ParseError):
        docio.loads("a: !!python/object/apply:os.system ['true']\n")


def test_malformed_document_raises_parse_error_with_line():
    with pytest.raises(ParseError):
        docio.loads("a: [1, 2\nb: }{")


def test_bad_utf8_rejected():
    with pytest.raises(ParseError):
        docio.loads(b"\xff\xfe\x00bad")


def test_expect_helpers():
    with pytest.raises(SchemaError):
        docio.expect_map([1], "x")
    with pytest.raises(SchemaError):
        docio.expect_list({"a": 1}, "x")
    with pytest.raises(SchemaError):
        docio.expect_str("", "x")
    with pytest.raises(SchemaError):
        docio.expect_finite(float("nan"), "x")
    with pytest.raises(SchemaError):
        docio.expect_finite(True, "x")
    assert docio.expect_finite(3, "x") == 3.0


def test_schema_tag_check():
    with pytest.raises(SchemaError):
        docio.check_schema_tag({"schema": "a/1"}, "b/1", "doc")


def test_fuzz_never_crashes():
    # a quick local fuzz; the full 1e5-input version lives in acceptance
    import random

    rng = random.Random(1)
    for _ in range(2000):
        blob = bytes(rng.randrange(256) for _ in range(rng.randrange(0, 80)))
        try:
            docio.loads(blob)
        except ParseError:
            pass
