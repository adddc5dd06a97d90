"""Identity authority, virtual identities, credentials and regulated linking.

An individual holds one master secret. Each organisation sees a different
virtual identity (vid) derived from it with a keyed PRF, so transcripts held
by two organisations share no joinable field. Attribute credentials can be
moved from the vid an approver knows onto another vid by blind signing.
Only the identity authority, on a regulator grant, can link two vids.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable

from . import crypto
from .audit import AuditLog
from .framing import frame, pack_fields, u64, unframe

CREDENTIAL_MAGIC = b"CRD1"


class IdentityError(Exception):
    DUPLICATE_ENROLLMENT = "DUPLICATE_ENROLLMENT"
    UNKNOWN_MASTER = "UNKNOWN_MASTER"
    EVIDENCE_REJECTED = "EVIDENCE_REJECTED"
    ACCESS_DENIED = "ACCESS_DENIED"
    DECRYPT_FAIL = "DECRYPT_FAIL"

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


@dataclass(frozen=True)
class MasterIdentity:
    master_secret: bytes = field(repr=False)
    master_id: bytes

    @classmethod
    def from_secret(cls, secret: bytes) -> "MasterIdentity":
        return cls(secret, crypto.hash(b"master-id" + secret))


@dataclass(frozen=True)
class VirtualIdentity:
    value: bytes
    org_tag: str
    counter: int = 0

    @property
    def hex(self) -> str:
        return self.value.hex()

    def __str__(self) -> str:
        return f"vid:{self.value.hex()[:16]}@{self.org_tag}"


def _vid_input(org_tag: str, counter: int) -> bytes:
    return pack_fields([b"vid", org_tag.encode("utf-8"), u64(counter)])


def derive_vid(master: MasterIdentity, org_tag: str, counter: int = 0) -> VirtualIdentity:
    """Counter 0 is the default single-pseudonym-per-organisation mode."""
    return VirtualIdentity(crypto.prf(master.master_secret, _vid_input(org_tag, counter)),
                           org_tag, counter)


def vid_keypair(master: MasterIdentity, vid: VirtualIdentity) -> crypto.KeyPair:
    """Signing key bound to one vid, derived from the master secret."""
    seed = crypto.prf(master.master_secret, b"vid-signing-key" + vid.value)
    return crypto.generate_keypair(_FixedBytes(seed))


class _FixedBytes:
    def __init__(self, data: bytes):
        self._data = data

    def bytes(self, n: int) -> bytes:
        assert n == len(self._data)
        return self._data


# -- credentials ----------------------------------------------------------------


def credential_message(subject_vid: bytes, attribute: str, issuer: str) -> bytes:
    return pack_fields([b"credential", subject_vid, attribute.encode("utf-8"), issuer.encode("utf-8")])


@dataclass(frozen=True)
class Credential:
    subject_vid: bytes
    attribute: str
    issuer: str
    signature: bytes

    def message(self) -> bytes:
        return credential_message(self.subject_vid, self.attribute, self.issuer)

    def verify(self, issuer_public_key: crypto.BlindPublicKey) -> bool:
        return crypto.verify_blind_signature(issuer_public_key, self.message(), self.signature)

    def to_bytes(self) -> bytes:
        return frame(CREDENTIAL_MAGIC, [self.subject_vid, self.attribute.encode("utf-8"),
                                        self.issuer.encode("utf-8"), self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Credential":
        vid, attr, issuer, sig = unframe(CREDENTIAL_MAGIC, data, 4)
        return cls(vid, attr.decode("utf-8"), issuer.decode("utf-8"), sig)


@dataclass(frozen=True)
class IssuanceEvidence:
    """What an approver accepts before blind-signing.

    ``known_vid`` is the requester's vid at the approver; ``proof`` is that
    vid's signature over the blinded value being submitted.
    """

    known_vid: bytes
    proof: bytes


class Issuer:
    """An organisation that issues attribute credentials.

    One blind-signing key per attribute, so the attribute is fixed by the key
    even though the issuer never sees the signed message.
    """

    def __init__(self, name: str, attributes, rng: crypto.RandomSource | None = None,
                 key_bits: int = 2048):
        self.name = name
        rng = crypto.default_rng(rng)
        self._keys = {a: crypto.generate_blind_keypair(key_bits, rng) for a in attributes}
        # vid -> set of attributes this issuer has decided the subject holds
        self._records: dict[bytes, set[str]] = {}
        self._vid_keys: dict[bytes, bytes] = {}
        self.transcript: list[dict[str, str]] = []
        self._lock = threading.Lock()

    def public_key(self, attribute: str) -> crypto.BlindPublicKey:
        return self._keys[attribute].public

    def enrol_subject(self, vid: bytes, vid_public_key: bytes, attributes, **extra) -> None:
        """Record the issuer's own (out-of-band) decision about the subject known as ``vid``."""
        with self._lock:
            self._records.setdefault(vid, set()).update(attributes)
            self._vid_keys[vid] = vid_public_key
            row = {"vid": vid.hex(), "vid_key": vid_public_key.hex()}
            row.update({k: v.hex() if isinstance(v, bytes) else str(v) for k, v in extra.items()})
            self.transcript.append(row)

    def issue_plain(self, subject_vid: bytes, attribute: str) -> Credential:
        if attribute not in self._records.get(subject_vid, ()):
            raise IdentityError(IdentityError.EVIDENCE_REJECTED, "subject not approved for attribute")
        msg = credential_message(subject_vid, attribute, self.name)
        return Credential(subject_vid, attribute, self.name,
                          crypto.blind_sign_direct(self._keys[attribute], msg))

    def issue_blinded(self, blinded_value: bytes, attribute: str,
                      evidence: IssuanceEvidence) -> bytes:
        """Sign a blinded credential message; the issuer learns nothing of the destination vid."""
        if attribute not in self._keys:
            raise IdentityError(IdentityError.EVIDENCE_REJECTED, f"no key for {attribute!r}")
        if attribute not in self._records.get(evidence.known_vid, ()):
            raise IdentityError(IdentityError.EVIDENCE_REJECTED, "subject not approved for attribute")
        pk = self._vid_keys[evidence.known_vid]
        if not crypto.verify(pk, pack_fields([b"blind-request", blinded_value, attribute.encode()]),
                             evidence.proof):
            raise IdentityError(IdentityError.EVIDENCE_REJECTED, "proof of vid control fails")
        blinded_sig = crypto.sign_blinded(self._keys[attribute], blinded_value)
        with self._lock:
            self.transcript.append({
                "vid": evidence.known_vid.hex(),
                "blinded_value": blinded_value.hex(),
                "blinded_signature": blinded_sig.hex(),
            })
        return blinded_sig


def issue_credential(issuer: Issuer, subject, attribute: str, evidence=None):
    """Issue on a plain vid (returns :class:`Credential`) or on a blinded value
    (returns the blinded signature for the subject to unblind)."""
    if isinstance(subject, VirtualIdentity):
        return issuer.issue_plain(subject.value, attribute)
    if isinstance(subject, crypto.BlindedMessage):
        subject = subject.value
    if evidence is None:
        raise IdentityError(IdentityError.EVIDENCE_REJECTED, "blinded issuance needs evidence")
    return issuer.issue_blinded(subject, attribute, evidence)


# -- the authority ---------------------------------------------------------------


@dataclass(frozen=True)
class LinkRequest:
    vid_a: bytes
    enc_uid_a: bytes
    vid_b: bytes
    enc_uid_b: bytes
    purpose: str


@dataclass(frozen=True)
class LinkRecord:
    requesting_authority: str
    vid_a: bytes
    vid_b: bytes
    purpose: str
    timestamp: int
    linked: bool


UID_CONTEXT = b"pbdkit-uid"


class IdentityAuthority:
    """Trusted authority: enrolment, derivation checks, vid authentication, linking."""

    def __init__(self, name: str = "identity-authority", rng: crypto.RandomSource | None = None,
                 clock: Callable[[], int] | None = None, key_bits: int = 2048):
        self.name = name
        self._rng = crypto.default_rng(rng)
        self._clock = clock or (lambda: 0)
        self.encryption_key = crypto.generate_encryption_keypair(self._rng)
        self._cred_key = crypto.generate_blind_keypair(key_bits, self._rng)
        self._masters: dict[bytes, bytes] = {}
        self._dedup: dict[str, bytes] = {}
        self._auth_directory: dict[bytes, bytes] = {}
        self._lock = threading.Lock()
        self.check_log: list[tuple[int, str, bool]] = []
        self.links: list[LinkRecord] = []
        self.audit = AuditLog(self._clock)

    @property
    def uid_public_key(self) -> bytes:
        return self.encryption_key.public_key

    @property
    def credential_public_key(self) -> crypto.BlindPublicKey:
        return self._cred_key.public

    def enroll(self, dedup_key: str) -> MasterIdentity:
        with self._lock:
            if dedup_key in self._dedup:
                raise IdentityError(IdentityError.DUPLICATE_ENROLLMENT, dedup_key)
            while True:
                master = MasterIdentity.from_secret(self._rng.bytes(32))
                if master.master_id not in self._masters:
                    break
            self._masters[master.master_id] = master.master_secret
            self._dedup[dedup_key] = master.master_id
            return master

    def check_derivation(self, vid: VirtualIdentity | bytes, master_id: bytes, org_tag: str,
                         counter: int = 0) -> bool:
        secret = self._masters.get(master_id)
        if secret is None:
            raise IdentityError(IdentityError.UNKNOWN_MASTER)
        value = vid.value if isinstance(vid, VirtualIdentity) else vid
        ok = crypto.prf(secret, _vid_input(org_tag, counter)) == value
        with self._lock:
            # the vid itself is not kept
            self.check_log.append((int(self._clock()), org_tag, ok))
        return ok

    def register_vid(self, vid: VirtualIdentity, master_id: bytes, public_key: bytes) -> None:
        """Add a checked vid and its signing key to the authentication directory."""
        if not self.check_derivation(vid, master_id, vid.org_tag, vid.counter):
            raise IdentityError(IdentityError.EVIDENCE_REJECTED, "vid not derived from master")
        with self._lock:
            self._auth_directory[vid.value] = public_key

    def authenticate(self, vid: bytes, public_key: bytes) -> bool:
        """Third leg of the three-way exchange: is ``public_key`` the key of ``vid``?"""
        return self._auth_directory.get(vid) == public_key

    def lookup(self, vid: bytes) -> bytes | None:
        """Registered signing key of ``vid`` (public directory data)."""
        return self._auth_directory.get(vid)

    def issue_credential(self, vid: VirtualIdentity, attribute: str, master_id: bytes) -> Credential:
        """Plain issuance: the authority checks derivation itself and signs."""
        if not self.check_derivation(vid, master_id, vid.org_tag, vid.counter):
            raise IdentityError(IdentityError.EVIDENCE_REJECTED, "derivation check failed")
        msg = credential_message(vid.value, attribute, self.name)
        return Credential(vid.value, attribute, self.name, crypto.blind_sign_direct(self._cred_key, msg))

    def _decrypt_uid(self, enc_uid: bytes) -> bytes:
        try:
            uid = crypto.open_from(self.encryption_key.private_key, enc_uid, UID_CONTEXT)
        except (crypto.DecryptError, crypto.MalformedKeyError) as exc:
            raise IdentityError(IdentityError.DECRYPT_FAIL, str(exc)) from exc
        if uid not in self._masters:
            raise IdentityError(IdentityError.DECRYPT_FAIL, "not an enrolled master id")
        return uid

    def _check_grant(self, decision, purpose: str, regulator_public_key: bytes) -> None:
        if decision is None or not decision.granted or decision.purpose != purpose:
            raise IdentityError(IdentityError.ACCESS_DENIED, "no regulator grant for purpose")
        if not decision.verify(regulator_public_key):
            raise IdentityError(IdentityError.ACCESS_DENIED, "grant signature invalid")

    def link_identities(self, request: LinkRequest, regulator_decision,
                        regulator_public_key: bytes) -> LinkRecord:
        self._check_grant(regulator_decision, request.purpose, regulator_public_key)
        linked = self._decrypt_uid(request.enc_uid_a) == self._decrypt_uid(request.enc_uid_b)
        record = LinkRecord(self.name, request.vid_a, request.vid_b, request.purpose,
                            int(self._clock()), linked)
        self._record_link(record)
        return record

    def match_identities(self, side_a: list[tuple[bytes, bytes]], side_b: list[tuple[bytes, bytes]],
                         purpose: str, regulator_decision, regulator_public_key: bytes) -> list[LinkRecord]:
        """Bulk linking of (vid, enc_uid) lists under one grant; each uid is decrypted once."""
        self._check_grant(regulator_decision, purpose, regulator_public_key)
        by_uid: dict[bytes, list[bytes]] = {}
        for vid, enc in side_b:
            by_uid.setdefault(self._decrypt_uid(enc), []).append(vid)
        records = []
        for vid_a, enc in side_a:
            for vid_b in by_uid.get(self._decrypt_uid(enc), ()):
                rec = LinkRecord(self.name, vid_a, vid_b, purpose, int(self._clock()), True)
                self._record_link(rec)
                records.append(rec)
        return records

    def _record_link(self, record: LinkRecord) -> None:
        with self._lock:
            self.links.append(record)
        self.audit.append("link", pack_fields([record.vid_a, record.vid_b, record.purpose.encode(),
                                               b"1" if record.linked else b"0"]))


# -- the individual's agent --------------------------------------------------------


class Individual:
    """An individual's agent: holds the master secret and derives everything else."""

    def __init__(self, authority: IdentityAuthority, dedup_key: str,
                 rng: crypto.RandomSource | None = None):
        self.master = authority.enroll(dedup_key)
        self._authority = authority
        self._rng = crypto.default_rng(rng)

    def vid(self, org_tag: str, counter: int = 0) -> VirtualIdentity:
        return derive_vid(self.master, org_tag, counter)

    def keypair(self, vid: VirtualIdentity) -> crypto.KeyPair:
        return vid_keypair(self.master, vid)

    def register(self, org_tag: str, counter: int = 0) -> VirtualIdentity:
        """Derive a vid and enter its signing key in the authority's directory."""
        vid = self.vid(org_tag, counter)
        self._authority.register_vid(vid, self.master.master_id, self.keypair(vid).public_key)
        return vid

    def sign_as(self, vid: VirtualIdentity, message: bytes) -> bytes:
        return crypto.sign(self.keypair(vid).private_key, message)

    def enc_uid(self) -> bytes:
        """Fresh randomised encryption of the master id for the authority."""
        return crypto.seal_to(self._authority.uid_public_key, self.master.master_id,
                              UID_CONTEXT, self._rng)

    def obtain_blind_credential(self, issuer: Issuer, known: VirtualIdentity,
                                destination: VirtualIdentity, attribute: str) -> Credential:
        """Turn the issuer's approval of ``known`` into a credential on ``destination``."""
        pk = issuer.public_key(attribute)
        msg = credential_message(destination.value, attribute, issuer.name)
        blinded = crypto.blind(msg, pk, self._rng)
        proof = self.sign_as(known, pack_fields([b"blind-request", blinded.value, attribute.encode()]))
        blinded_sig = issue_credential(issuer, blinded, attribute, IssuanceEvidence(known.value, proof))
        sig = crypto.unblind(blinded_sig, blinded.blinding_factor, pk)
        return Credential(destination.value, attribute, issuer.name, sig)
