"""Canonical JSON serialization and content hashing.

Everything that is hashed or compared byte-for-byte (workbook blobs, audit
records, job results) goes through :func:`canonical_json`: sorted keys, no
whitespace, UTF-8, floats in shortest round-trip form (Python repr
semantics). NaN and infinities are rejected.
"""

from __future__ import annotations

import hashlib
import json
from typing import Any

ZERO_HASH = "0" * 64


def canonical_json(obj: Any) -> bytes:
    return json.dumps(
        obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False, allow_nan=False
    ).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def content_hash(obj: Any) -> str:
    """SHA-256 (lowercase hex) of the canonical JSON form of *obj*."""
    return sha256_hex(canonical_json(obj))
