import hashlib
import json

import pytest

from vaxcert.canonical import (
    EncodingError,
    b64url_decode,
    b64url_encode,
    canonical_json_bytes,
    hash_canonical,
)


def test_keys_sorted_and_compact():
    value = {"b": 1, "a": [1, "x", None, True]}
    assert canonical_json_bytes(value) == b'{"a":[1,"x",null,true],"b":1}'


def test_insertion_order_is_irrelevant():
    one = {"x": 1, "y": {"b": 2, "a": 3}}
    two = {"y": {"a": 3, "b": 2}, "x": 1}
    assert canonical_json_bytes(one) == canonical_json_bytes(two)


def test_utf8_not_escaped():
    assert canonical_json_bytes({"k": "héllo"}) == '{"k":"héllo"}'.encode("utf-8")


def test_safe_ints_stay_numbers():
    assert canonical_json_bytes(2**53) == str(2**53).encode()
    assert canonical_json_bytes(-(2**53)) == str(-(2**53)).encode()


def test_oversized_ints_become_strings():
    # a JavaScript reader would otherwise round these
    assert canonical_json_bytes(2**53 + 1) == b'"9007199254740993"'
    assert canonical_json_bytes({"n": -(2**60)}) == ('{"n":"' + str(-(2**60)) + '"}').encode()


def test_floats_rejected():
    with pytest.raises(EncodingError):
        canonical_json_bytes({"x": 1.5})
    with pytest.raises(EncodingError):
        canonical_json_bytes([0.0])


def test_non_string_keys_rejected():
    with pytest.raises(EncodingError):
        canonical_json_bytes({1: "a"})


def test_tuples_encode_as_arrays():
    assert canonical_json_bytes((1, 2)) == b"[1,2]"


def test_hash_matches_independent_recomputation():
    value = {"z": [3, 2, 1], "a": {"nested": "değer"}, "flag": False}
    expected = hashlib.sha256(
        json.dumps(value, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    ).hexdigest()
    assert hash_canonical(value) == expected


def test_b64url_round_trip_without_padding():
    for size in range(0, 40):
        data = bytes(range(size))
        text = b64url_encode(data)
        assert "=" not in text
        assert b64url_decode(text) == data
