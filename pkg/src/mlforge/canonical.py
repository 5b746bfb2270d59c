"""Canonical serialization helpers used for digests, wire messages and logs."""

from __future__ import annotations

import hashlib
import json
from typing import Any


def canonical_json(obj: Any) -> bytes:
    """Byte-stable JSON: sorted keys, no whitespace, UTF-8."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def sha256_hex(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def digest64(data: bytes) -> int:
    """First 8 bytes of the content digest as a big-endian unsigned integer."""
    return int.from_bytes(hashlib.sha256(data).digest()[:8], "big")


def fmt_float(value: float) -> str:
    """Shortest round-trip decimal form; integers keep a trailing ``.0``."""
    return repr(float(value))
