"""Append-only hash-chained audit log.

Each entry commits to its predecessor's hash. The persisted form is JSON
lines followed by a head record holding the entry count and the last hash,
so dropping trailing entries is detected as well as edits and deletions.
"""

from __future__ import annotations

import json
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Sequence

from . import crypto
from .framing import i64, pack_fields, u64

GENESIS = bytes(32)


@dataclass(frozen=True)
class AuditEntry:
    seq: int
    timestamp: int
    event: str
    payload_digest: bytes
    prev_hash: bytes
    entry_hash: bytes

    def to_json(self) -> str:
        d = asdict(self)
        for k in ("payload_digest", "prev_hash", "entry_hash"):
            d[k] = d[k].hex()
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "AuditEntry":
        d = json.loads(line)
        return cls(
            seq=int(d["seq"]),
            timestamp=int(d["timestamp"]),
            event=str(d["event"]),
            payload_digest=bytes.fromhex(d["payload_digest"]),
            prev_hash=bytes.fromhex(d["prev_hash"]),
            entry_hash=bytes.fromhex(d["entry_hash"]),
        )


def entry_hash(seq: int, timestamp: int, event: str, payload_digest: bytes,
               prev_hash: bytes) -> bytes:
    return crypto.hash(pack_fields([u64(seq), i64(timestamp), event.encode(),
                                    payload_digest, prev_hash]))


def first_bad(entries: Sequence[AuditEntry], expected_count: int | None = None) -> int | None:
    """Index of the first entry that breaks the chain, or ``None`` if intact.

    A missing tail (fewer entries than ``expected_count``) is reported at the
    truncation point.
    """
    prev = GENESIS
    for i, e in enumerate(entries):
        if e.seq != i or e.prev_hash != prev:
            return i
        if e.entry_hash != entry_hash(e.seq, e.timestamp, e.event, e.payload_digest, e.prev_hash):
            return i
        prev = e.entry_hash
    if expected_count is not None and expected_count != len(entries):
        return min(expected_count, len(entries))
    return None


def verify_audit(log: "AuditLog | Sequence[AuditEntry]") -> bool:
    if isinstance(log, AuditLog):
        return first_bad(log.entries) is None
    return first_bad(log) is None


class AuditLog:
    def __init__(self, clock: Callable[[], int] | None = None):
        self._entries: list[AuditEntry] = []
        self._lock = threading.Lock()
        self._clock = clock or (lambda: 0)

    @property
    def entries(self) -> list[AuditEntry]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def append(self, event: str, payload: bytes) -> AuditEntry:
        with self._lock:
            seq = len(self._entries)
            prev = self._entries[-1].entry_hash if self._entries else GENESIS
            ts = int(self._clock())
            digest = crypto.hash(payload)
            entry = AuditEntry(seq, ts, event, digest, prev, entry_hash(seq, ts, event, digest, prev))
            self._entries.append(entry)
            return entry

    def verify(self) -> bool:
        return verify_audit(self)

    def dumps(self) -> str:
        entries = self._entries
        lines = [e.to_json() for e in entries]
        head = {"head": len(entries), "last_hash": (entries[-1].entry_hash if entries else GENESIS).hex()}
        lines.append(json.dumps(head, sort_keys=True))
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


@dataclass
class FileVerdict:
    ok: bool
    first_bad: int | None
    entries: int
    detail: str = ""


def verify_audit_text(text: str) -> FileVerdict:
    """Check a persisted log; report where the chain first breaks."""
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    entries: list[AuditEntry] = []
    head: dict | None = None

    def broken(detail: str) -> FileVerdict:
        bad = first_bad(entries)
        return FileVerdict(False, len(entries) if bad is None else bad, len(entries), detail)

    for i, line in enumerate(lines):
        try:
            obj = json.loads(line)
            if not isinstance(obj, dict):
                raise ValueError("not an object")
            if "head" in obj:
                if i != len(lines) - 1:
                    return broken("head record before end of log")
                head = obj
                break
            entry = AuditEntry.from_json(line)
        except (ValueError, KeyError, TypeError) as exc:
            return broken(f"unparseable entry: {exc}")
        if entry.to_json() != line:
            return broken("non-canonical entry encoding")
        entries.append(entry)
    if head is None:
        return broken("missing head record (truncated)")
    try:
        count = int(head["head"])
        last = bytes.fromhex(head["last_hash"])
    except (ValueError, KeyError, TypeError) as exc:
        return broken(f"bad head record: {exc}")
    bad = first_bad(entries, count)
    if bad is not None:
        return FileVerdict(False, bad, len(entries), "hash chain broken")
    if entries and entries[-1].entry_hash != last:
        return FileVerdict(False, len(entries) - 1, len(entries), "head hash mismatch")
    return FileVerdict(True, None, len(entries))


def verify_audit_file(path: str | Path) -> FileVerdict:
    # undecodable bytes become U+FFFD and then fail the hash or parse check
    return verify_audit_text(Path(path).read_bytes().decode("utf-8", errors="replace"))
