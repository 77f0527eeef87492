"""Canonical byte encodings shared by every module.

Anything that gets hashed or signed goes through canonical JSON first:
object keys sorted, no insignificant whitespace, UTF-8 output. Integers
outside the IEEE-754 safe range are rendered as decimal strings so a
JavaScript client can reproduce the exact bytes; floats are rejected
outright for the same reason.
"""

from __future__ import annotations

import base64
import hashlib
import json
from typing import Any

SAFE_INT_BOUND = 2**53


class EncodingError(ValueError):
    """Value has no canonical JSON form."""


def _normalize(value: Any) -> Any:
    # bool is an int subclass; test it first
    if isinstance(value, bool) or value is None or isinstance(value, str):
        return value
    if isinstance(value, int):
        return str(value) if abs(value) > SAFE_INT_BOUND else value
    if isinstance(value, float):
        raise EncodingError("floats have no canonical form; use ints or strings")
    if isinstance(value, (list, tuple)):
        return [_normalize(item) for item in value]
    if isinstance(value, dict):
        out = {}
        for key, item in value.items():
            if not isinstance(key, str):
                raise EncodingError(f"object keys must be strings, got {type(key).__name__}")
            out[key] = _normalize(item)
        return out
    raise EncodingError(f"cannot canonically encode {type(value).__name__}")


def canonical_json_bytes(value: Any) -> bytes:
    """Deterministic UTF-8 JSON encoding of ``value``."""
    normalized = _normalize(value)
    return json.dumps(normalized, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def sha256_bytes(data: bytes) -> bytes:
    return hashlib.sha256(data).digest()


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def hash_canonical(value: Any) -> str:
    """Hex SHA-256 over the canonical JSON encoding."""
    return sha256_hex(canonical_json_bytes(value))


def b64url_encode(data: bytes) -> str:
    """URL-safe base64 without padding."""
    return base64.urlsafe_b64encode(data).decode("ascii").rstrip("=")


def b64url_decode(text: str) -> bytes:
    pad = -len(text) % 4
    return base64.urlsafe_b64decode(text + "=" * pad)
