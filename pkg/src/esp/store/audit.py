"""Append-only, hash-chained audit log.

On disk the log is a sequence of length-prefixed records: a 4-byte
big-endian length followed by the canonical JSON of the record (including
its ``record_hash``). Hashing:

    record_hash = SHA-256( raw(prev_hash) || canonical(record - record_hash) )

where ``raw`` decodes the lowercase-hex digest to 32 bytes and the genesis
``prev_hash`` is 32 zero bytes. Sequences are contiguous from 1. Any byte
flip, deletion, or reordering breaks verification at the first affected
sequence number.
"""

from __future__ import annotations

import json
import struct
import threading
from datetime import datetime, timezone
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterator

from ..canonical import ZERO_HASH, canonical_json, content_hash, sha256_hex
from ..errors import EspError

ACTIONS = (
    "UPLOAD", "DOWNLOAD", "ATTACH_TESTS", "TEST_RUN", "PROMOTE", "RETIRE",
    "JOB_SUBMIT", "JOB_COMPLETE", "JOB_FAIL",
)

_LEN = struct.Struct(">I")


@dataclass(frozen=True)
class AuditRecord:
    sequence: int
    timestamp: str  # UTC ISO-8601 with microseconds and trailing Z
    actor: str
    action: str
    subject: str
    payload_hash: str
    prev_hash: str
    record_hash: str

    def to_json(self) -> dict[str, Any]:
        return {
            "sequence": self.sequence,
            "timestamp": self.timestamp,
            "actor": self.actor,
            "action": self.action,
            "subject": self.subject,
            "payload_hash": self.payload_hash,
            "prev_hash": self.prev_hash,
            "record_hash": self.record_hash,
        }


def _record_hash(body: dict[str, Any], prev_hash: str) -> str:
    return sha256_hex(bytes.fromhex(prev_hash) + canonical_json(body))


class AuditLog:
    """Single-writer appender over the length-prefixed chain file."""

    def __init__(self, path: Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._tail: AuditRecord | None = None
        self._count = 0
        self._corrupt = False
        if self.path.exists():
            try:
                for record in self.iter_records():
                    self._tail = record
                    self._count += 1
            except (EspError, TypeError):
                # keep the log openable so verify() can report the damage;
                # appends are refused
                self._corrupt = True

    def append(self, actor: str, action: str, subject: str, payload: Any) -> AuditRecord:
        if action not in ACTIONS:
            raise EspError("BAD_REQUEST", f"unknown audit action {action!r}")
        with self._lock:
            if self._corrupt:
                raise EspError(
                    "CORRUPT", "audit log is damaged; refusing further writes"
                )
            if self._tail is not None:
                body = self._tail.to_json()
                stored = body.pop("record_hash")
                if _record_hash(body, self._tail.prev_hash) != stored:
                    raise EspError(
                        "CORRUPT",
                        "audit tail fails its own hash; refusing further writes",
                        {"sequence": self._tail.sequence},
                    )
            prev_hash = self._tail.record_hash if self._tail else ZERO_HASH
            timestamp = datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")
            body = {
                "sequence": self._count + 1,
                "timestamp": timestamp,
                "actor": actor,
                "action": action,
                "subject": subject,
                "payload_hash": content_hash(payload),
                "prev_hash": prev_hash,
            }
            record = AuditRecord(record_hash=_record_hash(body, prev_hash), **body)
            blob = canonical_json(record.to_json())
            with self.path.open("ab") as fh:
                fh.write(_LEN.pack(len(blob)))
                fh.write(blob)
                fh.flush()
            self._tail = record
            self._count += 1
            return record

    def iter_records(self) -> Iterator[AuditRecord]:
        if not self.path.exists():
            return
        with self.path.open("rb") as fh:
            while True:
                header = fh.read(4)
                if not header:
                    return
                if len(header) < 4:
                    raise EspError("CORRUPT", "truncated length prefix")
                (length,) = _LEN.unpack(header)
                blob = fh.read(length)
                if len(blob) < length:
                    raise EspError("CORRUPT", "truncated record")
                try:
                    doc = json.loads(blob)
                except ValueError as exc:
                    raise EspError("CORRUPT", f"undecodable record: {exc}") from exc
                yield AuditRecord(**doc)

    def records(self, offset: int = 0, limit: int | None = None) -> list[AuditRecord]:
        out = []
        for i, record in enumerate(self.iter_records()):
            if i < offset:
                continue
            out.append(record)
            if limit is not None and len(out) >= limit:
                break
        return out

    def __len__(self) -> int:
        return self._count

    def verify(self) -> tuple[bool, int | None]:
        """Recompute the whole chain from genesis. Returns (ok, first bad
        sequence); the reported sequence is the expected position of the
        first inconsistency."""
        prev_hash = ZERO_HASH
        expected_seq = 1
        try:
            for record in self.iter_records():
                if record.sequence != expected_seq:
                    return False, expected_seq
                if record.prev_hash != prev_hash:
                    return False, expected_seq
                body = record.to_json()
                stored = body.pop("record_hash")
                if _record_hash(body, prev_hash) != stored:
                    return False, expected_seq
                prev_hash = stored
                expected_seq += 1
        except (EspError, TypeError):
            return False, expected_seq
        return True, None
