"""Append-only master event log with a checksummed binary encoding.

Record layout: ``u32 length | u64 seq | u8 kind | payload | u32 crc32(payload)``
where length covers everything after itself and the payload is canonical JSON.
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass

from mlforge import errors
from mlforge.canonical import canonical_json

KINDS = {"register": 1, "submit": 2, "place": 3, "complete": 4, "death": 5}
_KIND_NAMES = {v: k for k, v in KINDS.items()}

_HEADER = struct.Struct(">QB")
_LEN = struct.Struct(">I")
_CRC = struct.Struct(">I")


@dataclass(frozen=True)
class Event:
    seq: int
    kind: str
    payload: dict

    def encode(self) -> bytes:
        payload = canonical_json(self.payload)
        body = _HEADER.pack(self.seq, KINDS[self.kind]) + payload + _CRC.pack(zlib.crc32(payload))
        return _LEN.pack(len(body)) + body


class EventLog:
    """Sequence-numbered record of every state-changing master decision."""

    def __init__(self, events: list[Event] | None = None):
        self.events: list[Event] = list(events or [])

    @property
    def last_seq(self) -> int:
        return self.events[-1].seq if self.events else 0

    def append(self, kind: str, payload: dict) -> Event:
        event = Event(seq=self.last_seq + 1, kind=kind, payload=payload)
        self.events.append(event)
        return event

    def to_bytes(self) -> bytes:
        return b"".join(event.encode() for event in self.events)

    @classmethod
    def from_bytes(cls, data: bytes) -> EventLog:
        events: list[Event] = []
        offset = 0
        expected_seq = 1
        while offset < len(data):
            if offset + _LEN.size > len(data):
                raise errors.CorruptLog(expected_seq, "truncated record length")
            (length,) = _LEN.unpack_from(data, offset)
            offset += _LEN.size
            if offset + length > len(data) or length < _HEADER.size + _CRC.size:
                raise errors.CorruptLog(expected_seq, "truncated record body")
            body = data[offset : offset + length]
            offset += length
            seq, kind_code = _HEADER.unpack_from(body, 0)
            payload = body[_HEADER.size : -_CRC.size]
            (crc,) = _CRC.unpack_from(body, len(body) - _CRC.size)
            if seq != expected_seq:
                raise errors.CorruptLog(expected_seq, f"sequence gap: found {seq}")
            if zlib.crc32(payload) != crc:
                raise errors.CorruptLog(seq, "payload checksum mismatch")
            if kind_code not in _KIND_NAMES:
                raise errors.CorruptLog(seq, f"unknown event kind {kind_code}")
            events.append(Event(seq=seq, kind=_KIND_NAMES[kind_code], payload=json.loads(payload)))
            expected_seq += 1
        return cls(events)

    def persist(self, storage) -> str:
        """Write the whole log as one blob; returns its digest."""
        return storage.put_blob(self.to_bytes())

    @classmethod
    def load(cls, storage, digest: str) -> EventLog:
        return cls.from_bytes(storage.get_blob(digest))
