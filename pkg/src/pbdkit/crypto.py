"""Cryptographic primitives and regulator-controlled, type-bound envelopes.

Signatures are Ed25519, key wrapping is X25519 + HKDF + AES-GCM, payloads are
AES-256-GCM, and blind signatures are RSA with a full-domain hash and
multiplicative blinding.

All randomness is drawn from a :class:`RandomSource` so that whole scenario
runs can be replayed from a seed.
"""

from __future__ import annotations

import builtins
import hashlib
import hmac
import math
import secrets
import unicodedata
from dataclasses import dataclass, field, fields
from typing import Protocol

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .framing import FramingError, frame, pack_fields, unframe

DIGEST_SIZE = 32
NONCE_SIZE = 12
DATA_KEY_SIZE = 32
ENVELOPE_MAGIC = b"PBD1"

_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw
_RAW_PRIV = serialization.PrivateFormat.Raw
_NOENC = serialization.NoEncryption()


# -- randomness ---------------------------------------------------------------


class RandomSource(Protocol):
    def bytes(self, n: int) -> bytes: ...


class SystemRandomSource:
    """Operating-system randomness."""

    def bytes(self, n: int) -> bytes:
        return secrets.token_bytes(n)


class SeededRandomSource:
    """Deterministic HMAC-SHA256 counter-mode generator.

    Used so that a scenario seeded with the same value produces identical
    keys, nonces and transcripts. Not for production key material.
    """

    def __init__(self, seed: bytes | int | str, label: str = ""):
        if isinstance(seed, int):
            seed = seed.to_bytes(16, "big", signed=True)
        elif isinstance(seed, str):
            seed = seed.encode()
        self._key = hashlib.sha256(b"pbdkit-drbg\x00" + label.encode() + b"\x00" + seed).digest()
        self._counter = 0

    def bytes(self, n: int) -> bytes:
        out = bytearray()
        while len(out) < n:
            out += hmac.new(self._key, self._counter.to_bytes(8, "big"), hashlib.sha256).digest()
            self._counter += 1
        return bytes(out[:n])

    def fork(self, label: str) -> "SeededRandomSource":
        """Independent child stream, stable regardless of parent consumption order."""
        return SeededRandomSource(self._key, label)


def default_rng(rng: RandomSource | None) -> RandomSource:
    return rng if rng is not None else SystemRandomSource()


def randbelow(rng: RandomSource, n: int) -> int:
    """Uniform integer in ``[0, n)`` by rejection sampling."""
    if n <= 0:
        raise ValueError("n must be positive")
    nbytes = (n.bit_length() + 7) // 8 + 1
    limit = (256 ** nbytes // n) * n
    while True:
        v = int.from_bytes(rng.bytes(nbytes), "big")
        if v < limit:
            return v % n


# -- hashing ------------------------------------------------------------------


def hash(message: bytes) -> bytes:  # noqa: A001 - deliberate domain name
    """SHA-256 digest."""
    return hashlib.sha256(message).digest()


def prf(key: bytes, message: bytes) -> bytes:
    """HMAC-SHA256, used wherever a keyed pseudo-random function is needed."""
    return hmac.new(key, message, hashlib.sha256).digest()


# -- signatures ---------------------------------------------------------------


class MalformedKeyError(ValueError):
    """Key bytes that cannot be parsed; distinct from a failed verification."""


@dataclass(frozen=True)
class KeyPair:
    public_key: bytes
    private_key: bytes = field(repr=False)


def generate_keypair(rng: RandomSource | None = None) -> KeyPair:
    sk = Ed25519PrivateKey.from_private_bytes(default_rng(rng).bytes(32))
    return KeyPair(
        sk.public_key().public_bytes(_RAW, _RAW_PUB),
        sk.private_bytes(_RAW, _RAW_PRIV, _NOENC),
    )


def sign(private_key: bytes, message: bytes) -> bytes:
    try:
        sk = Ed25519PrivateKey.from_private_bytes(private_key)
    except ValueError as exc:
        raise MalformedKeyError(str(exc)) from exc
    return sk.sign(message)


def verify(public_key: bytes, message: bytes, signature: bytes) -> bool:
    try:
        pk = Ed25519PublicKey.from_public_bytes(public_key)
    except ValueError as exc:
        raise MalformedKeyError(str(exc)) from exc
    try:
        pk.verify(signature, message)
    except InvalidSignature:
        return False
    return True


# -- public-key wrapping --------------------------------------------------------


class DecryptError(Exception):
    """A wrapped blob failed to authenticate under the given key and context."""


@dataclass(frozen=True)
class EncryptionKeyPair:
    public_key: bytes
    private_key: bytes = field(repr=False)


def generate_encryption_keypair(rng: RandomSource | None = None) -> EncryptionKeyPair:
    sk = X25519PrivateKey.from_private_bytes(default_rng(rng).bytes(32))
    return EncryptionKeyPair(
        sk.public_key().public_bytes(_RAW, _RAW_PUB),
        sk.private_bytes(_RAW, _RAW_PRIV, _NOENC),
    )


def _kek(shared: bytes, eph_pub: bytes, recipient: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=32,
        salt=None,
        info=b"pbdkit-wrap" + eph_pub + recipient,
    ).derive(shared)


def seal_to(public_key: bytes, plaintext: bytes, aad: bytes = b"",
            rng: RandomSource | None = None) -> bytes:
    """Randomised public-key encryption: ephemeral X25519, HKDF, AES-GCM.

    The KEK is single-use, so the fixed zero nonce is safe.
    """
    try:
        pk = X25519PublicKey.from_public_bytes(public_key)
    except ValueError as exc:
        raise MalformedKeyError(str(exc)) from exc
    eph = X25519PrivateKey.from_private_bytes(default_rng(rng).bytes(32))
    eph_pub = eph.public_key().public_bytes(_RAW, _RAW_PUB)
    kek = _kek(eph.exchange(pk), eph_pub, public_key)
    return eph_pub + AESGCM(kek).encrypt(bytes(NONCE_SIZE), plaintext, aad)


def open_from(private_key: bytes, blob: bytes, aad: bytes = b"") -> bytes:
    if len(blob) < 32 + 16:
        raise DecryptError("wrapped blob too short")
    try:
        sk = X25519PrivateKey.from_private_bytes(private_key)
        eph = X25519PublicKey.from_public_bytes(blob[:32])
    except ValueError as exc:
        raise MalformedKeyError(str(exc)) from exc
    recipient = sk.public_key().public_bytes(_RAW, _RAW_PUB)
    try:
        shared = sk.exchange(eph)
    except ValueError as exc:  # low-order point
        raise DecryptError(str(exc)) from exc
    kek = _kek(shared, blob[:32], recipient)
    try:
        return AESGCM(kek).decrypt(bytes(NONCE_SIZE), blob[32:], aad)
    except InvalidTag as exc:
        raise DecryptError("wrapped key does not authenticate") from exc


# -- blind RSA ----------------------------------------------------------------

_SMALL_PRIMES = [p for p in range(3, 2000) if all(p % q for q in range(2, int(p ** 0.5) + 1))]


def _probable_prime(n: int, rng: RandomSource, rounds: int = 40) -> bool:
    if n < 2:
        return False
    for p in _SMALL_PRIMES:
        if n % p == 0:
            return n == p
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = 2 + randbelow(rng, n - 3)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def _random_prime(bits: int, rng: RandomSource, e: int) -> int:
    while True:
        cand = int.from_bytes(rng.bytes(bits // 8), "big")
        cand |= (1 << (bits - 1)) | (1 << (bits - 2)) | 1
        if math.gcd(cand - 1, e) == 1 and _probable_prime(cand, rng):
            return cand


@dataclass(frozen=True)
class BlindPublicKey:
    n: int
    e: int

    @property
    def size(self) -> int:
        return (self.n.bit_length() + 7) // 8

    def to_bytes(self) -> bytes:
        return pack_fields([self.n.to_bytes(self.size, "big"), self.e.to_bytes(4, "big")])


@dataclass(frozen=True)
class BlindPrivateKey:
    n: int
    e: int
    d: int = field(repr=False)
    p: int = field(repr=False)
    q: int = field(repr=False)

    @property
    def public(self) -> BlindPublicKey:
        return BlindPublicKey(self.n, self.e)

    def _apply(self, m: int) -> int:
        # CRT exponentiation
        mp = pow(m % self.p, self.d % (self.p - 1), self.p)
        mq = pow(m % self.q, self.d % (self.q - 1), self.q)
        h = (pow(self.q, -1, self.p) * (mp - mq)) % self.p
        return mq + h * self.q


def generate_blind_keypair(bits: int = 2048, rng: RandomSource | None = None,
                           e: int = 65537) -> BlindPrivateKey:
    rng = default_rng(rng)
    while True:
        p = _random_prime(bits // 2, rng, e)
        q = _random_prime(bits // 2, rng, e)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        d = pow(e, -1, math.lcm(p - 1, q - 1))
        return BlindPrivateKey(n, e, d, p, q)


def full_domain_hash(message: bytes, public_key: BlindPublicKey) -> int:
    """Expand SHA-256 over a counter to the modulus width, reduce mod n."""
    width = public_key.size + 16
    out = bytearray()
    counter = 0
    while len(out) < width:
        out += hashlib.sha256(b"pbdkit-fdh" + counter.to_bytes(4, "big") + message).digest()
        counter += 1
    return int.from_bytes(out[:width], "big") % public_key.n


@dataclass(frozen=True)
class BlindedMessage:
    value: bytes
    blinding_factor: int = field(repr=False)


def blind(message: bytes, public_key: BlindPublicKey,
          rng: RandomSource | None = None) -> BlindedMessage:
    rng = default_rng(rng)
    n, e = public_key.n, public_key.e
    h = full_domain_hash(message, public_key)
    while True:
        r = randbelow(rng, n)
        if r > 1 and math.gcd(r, n) == 1:
            break
    value = (h * pow(r, e, n)) % n
    return BlindedMessage(value.to_bytes(public_key.size, "big"), r)


def sign_blinded(private_key: BlindPrivateKey, blinded_value: bytes) -> bytes:
    m = int.from_bytes(blinded_value, "big")
    if not 0 < m < private_key.n:
        raise ValueError("blinded value out of range")
    return private_key._apply(m).to_bytes(private_key.public.size, "big")


def unblind(blinded_signature: bytes, blinding_factor: int,
            public_key: BlindPublicKey) -> bytes:
    s = int.from_bytes(blinded_signature, "big")
    sig = (s * pow(blinding_factor, -1, public_key.n)) % public_key.n
    return sig.to_bytes(public_key.size, "big")


def blind_sign_direct(private_key: BlindPrivateKey, message: bytes) -> bytes:
    """Plain (unblinded) signature under the same key and verification rule."""
    h = full_domain_hash(message, private_key.public)
    return private_key._apply(h).to_bytes(private_key.public.size, "big")


def verify_blind_signature(public_key: BlindPublicKey, message: bytes, signature: bytes) -> bool:
    s = int.from_bytes(signature, "big")
    if not 0 < s < public_key.n:
        return False
    return pow(s, public_key.e, public_key.n) == full_domain_hash(message, public_key)


# -- typed envelopes ------------------------------------------------------------


@dataclass(frozen=True)
class TypeId:
    """A data type name, optionally parametrised by a subject tag: ``DT4/MedicalRecord(x)``."""

    name: str
    subject_parameter: str | None = None

    def __post_init__(self):
        name = unicodedata.normalize("NFC", self.name)
        if not name:
            raise ValueError("type name must be non-empty")
        if any(c in name for c in "()"):
            raise ValueError(f"type name may not contain parentheses: {name!r}")
        object.__setattr__(self, "name", name)
        if self.subject_parameter is not None:
            param = unicodedata.normalize("NFC", self.subject_parameter)
            if not param or any(c in param for c in "()"):
                raise ValueError(f"bad subject parameter: {param!r}")
            object.__setattr__(self, "subject_parameter", param)

    def __str__(self) -> str:
        if self.subject_parameter is None:
            return self.name
        return f"{self.name}({self.subject_parameter})"

    def to_bytes(self) -> bytes:
        return str(self).encode("utf-8")

    @classmethod
    def parse(cls, text: str) -> "TypeId":
        text = unicodedata.normalize("NFC", text.strip())
        if text.endswith(")") and "(" in text:
            name, _, param = text[:-1].partition("(")
            return cls(name, param)
        return cls(text)

    @classmethod
    def from_bytes(cls, data: bytes) -> "TypeId":
        return cls.parse(data.decode("utf-8"))


class EnvelopeError(Exception):
    """Failure to open an envelope; ``code`` says which check failed."""

    KEY_MISMATCH = "KEY_MISMATCH"
    TYPE_MISMATCH = "TYPE_MISMATCH"
    SIGNATURE_INVALID = "SIGNATURE_INVALID"

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


def subject_bytes(subject) -> bytes:
    """Wire form of a subject: a vid's 32-byte value, raw bytes, or empty for none."""
    if subject is None:
        return b""
    if isinstance(subject, (bytes, bytearray)):
        return bytes(subject)
    return subject.value


def wrap_context(type_id: TypeId, subject: bytes) -> bytes:
    return pack_fields([b"wrap", type_id.to_bytes(), subject])


def _payload_aad(type_id: TypeId, subject: bytes, producer: bytes) -> bytes:
    return pack_fields([b"data", type_id.to_bytes(), subject, producer])


@dataclass(frozen=True)
class Envelope:
    type_id: TypeId
    subject: bytes
    wrapped_key: bytes
    nonce: bytes
    ciphertext: bytes
    producer_sig: bytes

    def signed_part(self) -> bytes:
        return frame(ENVELOPE_MAGIC, [self.type_id.to_bytes(), self.subject,
                                      self.wrapped_key, self.nonce, self.ciphertext])

    def to_bytes(self) -> bytes:
        return frame(ENVELOPE_MAGIC, [self.type_id.to_bytes(), self.subject, self.wrapped_key,
                                      self.nonce, self.ciphertext, self.producer_sig])

    @classmethod
    def from_bytes(cls, data: bytes) -> "Envelope":
        t, s, w, n, c, sig = unframe(ENVELOPE_MAGIC, data, 6)
        if len(n) != NONCE_SIZE:
            raise FramingError("nonce must be 96 bits")
        return cls(TypeId.from_bytes(t), s, w, n, c, sig)

    @property
    def has_subject(self) -> bool:
        return bool(self.subject)


def seal(type_id: TypeId, subject, payload: bytes, regulator_public_key: bytes,
         producer: KeyPair, rng: RandomSource | None = None) -> Envelope:
    """Encrypt ``payload`` under a fresh data key wrapped to the regulator.

    The type and subject are bound into both the key wrap and the payload's
    associated data, so neither can be swapped without detection.
    """
    rng = default_rng(rng)
    subj = subject_bytes(subject)
    data_key = rng.bytes(DATA_KEY_SIZE)
    nonce = rng.bytes(NONCE_SIZE)
    wrapped = seal_to(regulator_public_key, data_key, wrap_context(type_id, subj), rng)
    ct = AESGCM(data_key).encrypt(nonce, payload, _payload_aad(type_id, subj, producer.public_key))
    unsigned = Envelope(type_id, subj, wrapped, nonce, ct, b"")
    return Envelope(type_id, subj, wrapped, nonce, ct,
                    sign(producer.private_key, unsigned.signed_part()))


def unwrap_data_key(regulator_private_key: bytes, envelope_wrapped_key: bytes,
                    claimed_type: TypeId, subject: bytes) -> bytes:
    """Regulator-side unwrap; fails unless the claimed type and subject are the sealed ones."""
    return open_from(regulator_private_key, envelope_wrapped_key,
                     wrap_context(claimed_type, subject))


def open_envelope(envelope: Envelope, data_key: bytes, producer_public_key: bytes,
                  claimed_type: TypeId | None = None, claimed_subject=None) -> bytes:
    """Verify the producer signature, then decrypt.

    ``claimed_type``/``claimed_subject`` default to the envelope's own fields;
    when given they are what the payload's associated data is rebuilt from.
    """
    try:
        ok = verify(producer_public_key, envelope.signed_part(), envelope.producer_sig)
    except MalformedKeyError:
        ok = False
    if not ok:
        raise EnvelopeError(EnvelopeError.SIGNATURE_INVALID, "producer signature")
    t = envelope.type_id if claimed_type is None else claimed_type
    s = envelope.subject if claimed_subject is None else subject_bytes(claimed_subject)
    if t != envelope.type_id or s != envelope.subject:
        raise EnvelopeError(EnvelopeError.TYPE_MISMATCH, f"sealed as {envelope.type_id}, claimed {t}")
    if len(data_key) != DATA_KEY_SIZE:
        raise EnvelopeError(EnvelopeError.KEY_MISMATCH, "data key length")
    try:
        return AESGCM(data_key).decrypt(envelope.nonce, envelope.ciphertext,
                                        _payload_aad(t, s, producer_public_key))
    except InvalidTag as exc:
        raise EnvelopeError(EnvelopeError.KEY_MISMATCH, "payload does not authenticate") from exc


# Generated dataclass __hash__ methods look ``hash`` up in this module, where it
# names SHA-256; give the frozen records the builtin-based hash instead.
def _record_hash(self) -> int:
    return builtins.hash(tuple(getattr(self, f.name) for f in fields(self) if f.compare))


for _cls in (KeyPair, EncryptionKeyPair, BlindPublicKey, BlindPrivateKey, BlindedMessage, TypeId, Envelope):
    _cls.__hash__ = _record_hash
del _cls
