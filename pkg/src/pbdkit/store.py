"""Encrypted record store.

Envelopes are indexed by ``PRF(index_key, subject || type)`` and nothing
else. The backing file is ``STO1`` followed by framed records; each record's
envelope bytes are additionally sealed under a storage key, so the subject
vid carried in the envelope header never reaches disk in the clear. The
token index is rebuilt in memory on open.
"""

from __future__ import annotations

import os
import struct
import threading
from dataclasses import dataclass
from pathlib import Path

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives.ciphers.aead import AESGCM

from . import crypto
from .crypto import Envelope, TypeId
from .framing import FramingError, from_u64, pack_fields, u64, unpack_fields

STORE_MAGIC = b"STO1"
_LEN = struct.Struct(">I")


class StoreError(Exception):
    pass


@dataclass(frozen=True)
class EncryptedRecord:
    index_token: bytes
    envelope: Envelope
    seq: int


def _is_te_context(ctx) -> bool:
    from .te import ExecutionContext

    return isinstance(ctx, ExecutionContext) and ctx.alive


class EncryptedStore:
    def __init__(self, index_key: bytes, path: str | Path | None = None,
                 rng: crypto.RandomSource | None = None):
        if len(index_key) != 32:
            raise ValueError("index key must be 32 bytes")
        self._index_key = index_key
        self._at_rest = crypto.prf(index_key, b"store-at-rest")
        self._rng = crypto.default_rng(rng)
        self._path = Path(path) if path is not None else None
        self._records: list[EncryptedRecord] = []
        self._index: dict[bytes, list[int]] = {}
        self._lock = threading.Lock()
        if self._path is not None:
            if self._path.exists() and self._path.stat().st_size > 0:
                self._load()
            else:
                self._path.write_bytes(STORE_MAGIC)

    def token(self, subject: bytes, type_id: TypeId) -> bytes:
        return crypto.prf(self._index_key, pack_fields([b"index", subject, type_id.to_bytes()]))

    def __len__(self) -> int:
        return len(self._records)

    def put(self, envelope: Envelope) -> int:
        tok = self.token(envelope.subject, envelope.type_id)
        with self._lock:
            seq = len(self._records)
            rec = EncryptedRecord(tok, envelope, seq)
            if self._path is not None:
                self._append(rec)
            self._records.append(rec)
            self._index.setdefault(tok, []).append(seq)
        return seq

    def get(self, subject, type_id: TypeId, requesting_te_context) -> list[Envelope]:
        if not _is_te_context(requesting_te_context):
            raise PermissionError("store reads are only served to TE execution contexts")
        return self.get_by_token(self.token(crypto.subject_bytes(subject), type_id))

    def get_by_token(self, token: bytes) -> list[Envelope]:
        with self._lock:
            return [self._records[i].envelope for i in self._index.get(token, ())]

    # persistence

    def _seal_record(self, rec: EncryptedRecord) -> bytes:
        nonce = self._rng.bytes(crypto.NONCE_SIZE)
        body = AESGCM(self._at_rest).encrypt(nonce, rec.envelope.to_bytes(), rec.index_token + u64(rec.seq))
        return pack_fields([rec.index_token, u64(rec.seq), nonce, body])

    def _append(self, rec: EncryptedRecord) -> None:
        framed = self._seal_record(rec)
        with open(self._path, "ab") as fh:
            fh.write(_LEN.pack(len(framed)) + framed)
            fh.flush()
            os.fsync(fh.fileno())

    def _load(self) -> None:
        data = self._path.read_bytes()
        if data[:4] != STORE_MAGIC:
            raise StoreError("not a store file")
        off = 4
        while off < len(data):
            if len(data) - off < 4:
                raise StoreError("truncated record length")
            (n,) = _LEN.unpack_from(data, off)
            off += 4
            chunk = data[off:off + n]
            if len(chunk) != n:
                raise StoreError("truncated record")
            off += n
            try:
                tok, seq_b, nonce, body = unpack_fields(chunk)
                seq = from_u64(seq_b)
                env = Envelope.from_bytes(AESGCM(self._at_rest).decrypt(nonce, body, tok + seq_b))
            except (ValueError, FramingError, InvalidTag) as exc:
                raise StoreError(f"corrupt record at offset {off - n - 4}: {exc}") from exc
            if seq != len(self._records):
                raise StoreError("sequence gap")
            self._records.append(EncryptedRecord(tok, env, seq))
            self._index.setdefault(tok, []).append(seq)
