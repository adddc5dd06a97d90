"""Messages exchanged between TE runtimes, the regulator and the identity authority."""

from __future__ import annotations

from dataclasses import dataclass

from . import crypto
from .crypto import TypeId
from .framing import FramingError, frame, pack_fields, unframe, unpack_fields

REQUEST_MAGIC = b"ARQ1"
REPORT_MAGIC = b"ATT1"
DECISION_MAGIC = b"DEC1"

GRANT = "GRANT"
DENY = "DENY"

# deny reasons
TE_UNKNOWN = "TE_UNKNOWN"
STALE_NONCE = "STALE_NONCE"
REQUESTER_UNAUTHENTICATED = "REQUESTER_UNAUTHENTICATED"
TYPE_UNAUTHENTICATED = "TYPE_UNAUTHENTICATED"
NO_RULE = "NO_RULE"
PREDICATE_MISSING = "PREDICATE_MISSING"
EXPIRED_CONSENT = "EXPIRED_CONSENT"

DENY_REASONS = (TE_UNKNOWN, STALE_NONCE, REQUESTER_UNAUTHENTICATED, TYPE_UNAUTHENTICATED,
                NO_RULE, PREDICATE_MISSING, EXPIRED_CONSENT)


@dataclass(frozen=True)
class AttestationReport:
    measurement: bytes
    session_public_key: bytes
    nonce: bytes
    platform_id: str
    signature: bytes

    def signed_part(self) -> bytes:
        return frame(REPORT_MAGIC, [self.measurement, self.session_public_key, self.nonce,
                                    self.platform_id.encode()])

    def to_bytes(self) -> bytes:
        return frame(REPORT_MAGIC, [self.measurement, self.session_public_key, self.nonce,
                                    self.platform_id.encode(), self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AttestationReport":
        m, spk, n, pid, sig = unframe(REPORT_MAGIC, data, 5)
        return cls(m, spk, n, pid.decode(), sig)


@dataclass(frozen=True)
class RequesterProof:
    """A human consumer's authentication for a sink request."""

    vid: bytes
    public_key: bytes
    credential: bytes
    signature: bytes


def requester_challenge(report: AttestationReport, claimed_type: TypeId, subject: bytes,
                        request_nonce: bytes) -> bytes:
    return pack_fields([b"requester", report.nonce, report.measurement,
                        claimed_type.to_bytes(), subject, request_nonce])


@dataclass(frozen=True)
class AccessRequest:
    attestation_report: AttestationReport
    claimed_input_type: TypeId
    subject_vid: bytes
    wrapped_key: bytes
    request_nonce: bytes
    requester: RequesterProof | None = None

    def to_bytes(self) -> bytes:
        req = b""
        if self.requester is not None:
            r = self.requester
            req = pack_fields([r.vid, r.public_key, r.credential, r.signature])
        return frame(REQUEST_MAGIC, [self.attestation_report.to_bytes(),
                                     self.claimed_input_type.to_bytes(), self.subject_vid,
                                     self.wrapped_key, self.request_nonce, req])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AccessRequest":
        rep, t, s, w, n, req = unframe(REQUEST_MAGIC, data, 6)
        requester = None
        if req:
            parts = unpack_fields(req)
            if len(parts) != 4:
                raise FramingError("requester block must have 4 fields")
            requester = RequesterProof(*parts)
        return cls(AttestationReport.from_bytes(rep), TypeId.from_bytes(t), s, w, n, requester)


@dataclass(frozen=True)
class AccessDecision:
    verdict: str
    decision_id: bytes
    reason: str = ""
    wrapped_key: bytes = b""
    purpose: str = ""
    signature: bytes = b""

    @property
    def granted(self) -> bool:
        return self.verdict == GRANT

    def signed_part(self) -> bytes:
        return frame(DECISION_MAGIC, [self.verdict.encode(), self.decision_id, self.reason.encode(),
                                      self.wrapped_key, self.purpose.encode()])

    def verify(self, regulator_public_key: bytes) -> bool:
        return crypto.verify(regulator_public_key, self.signed_part(), self.signature)

    def to_bytes(self) -> bytes:
        return frame(DECISION_MAGIC, [self.verdict.encode(), self.decision_id, self.reason.encode(),
                                      self.wrapped_key, self.purpose.encode(), self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "AccessDecision":
        v, d, r, w, p, sig = unframe(DECISION_MAGIC, data, 6)
        return cls(v.decode(), d, r.decode(), w, p.decode(), sig)


def provision_context(decision_id: bytes, session_public_key: bytes) -> bytes:
    return pack_fields([b"provision", decision_id, session_public_key])
