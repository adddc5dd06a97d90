"""Simulated trusted-executable runtime.

A TE is a manifest plus a code image plus a pure logic function. The runtime
performs the regulator callback for every input before any decryption, seals
every output to a declared type, and runs sink outputs through the declared
minimisation policy. Logic never sees keys and can only return values, so
the only way plaintext leaves is through the declared outputs.
"""

from __future__ import annotations

import inspect
import json
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, NamedTuple, Sequence

from . import crypto
from .crypto import Envelope, TypeId
from .framing import pack_fields
from .patterns import TypePattern, any_match
from .protocol import (
    AccessDecision,
    AccessRequest,
    AttestationReport,
    RequesterProof,
    provision_context,
    requester_challenge,
)

MANIFEST_FIELDS = ("name", "version", "input_types", "output_types", "sink",
                   "minimisation_policy", "callback")


class TEError(Exception):
    ACCESS_DENIED = "ACCESS_DENIED"
    TYPE_VIOLATION = "TYPE_VIOLATION"

    def __init__(self, code: str, reason: str = ""):
        super().__init__(f"{code}: {reason}" if reason else code)
        self.code = code
        self.reason = reason


class ManifestError(ValueError):
    pass


# -- minimisation -------------------------------------------------------------


@dataclass(frozen=True)
class MinimisationPolicy:
    allowed_fields: tuple[str, ...]
    aggregate_only: bool = False
    notification_template: str | None = None

    def to_text(self) -> str:
        parts = [f"allowed={','.join(self.allowed_fields)}",
                 f"aggregate_only={'true' if self.aggregate_only else 'false'}"]
        if self.notification_template is not None:
            parts.append(f"template={self.notification_template}")
        return "; ".join(parts)

    @classmethod
    def parse(cls, text: str) -> "MinimisationPolicy | None":
        text = text.strip()
        if text == "none":
            return None
        head, sep, template = text.partition("; template=")
        values = {}
        for part in head.split(";"):
            key, eq, value = part.strip().partition("=")
            if not eq:
                raise ManifestError(f"bad policy clause {part!r}")
            values[key] = value
        try:
            allowed = tuple(f for f in values["allowed"].split(",") if f)
            aggregate = _parse_bool(values["aggregate_only"])
        except KeyError as exc:
            raise ManifestError(f"policy missing {exc}") from None
        return cls(allowed, aggregate, template if sep else None)


def minimise(record: Mapping[str, Any] | Sequence[Mapping[str, Any]],
             policy: MinimisationPolicy) -> dict[str, Any]:
    """Project a record onto the allowed fields.

    With ``aggregate_only`` the input may be a list of records and the result
    is one row mapping each allowed field to its value counts.
    """
    if policy.aggregate_only:
        rows = [record] if isinstance(record, Mapping) else list(record)
        out: dict[str, Any] = {}
        for f in policy.allowed_fields:
            counts = Counter(str(r[f]) for r in rows if f in r)
            out[f] = dict(sorted(counts.items()))
        return out
    if not isinstance(record, Mapping):
        raise TypeError("row-level minimisation takes a single record")
    return {k: record[k] for k in policy.allowed_fields if k in record}


def render_notification(record: Mapping[str, Any], policy: MinimisationPolicy) -> str:
    """Fill the policy template from allowed fields only."""
    if policy.notification_template is None:
        raise ValueError("policy has no notification template")
    return policy.notification_template.format_map(minimise(record, MinimisationPolicy(policy.allowed_fields)))


# -- manifests and measurement ------------------------------------------------------


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "1"):
        return True
    if t in ("false", "no", "0"):
        return False
    raise ManifestError(f"not a boolean: {text!r}")


@dataclass(frozen=True)
class TEManifest:
    name: str
    version: str
    input_types: tuple[str, ...]
    output_types: tuple[str, ...]
    sink: bool = False
    minimisation_policy: MinimisationPolicy | None = None
    regulator_callback_declared: bool = True

    @property
    def input_patterns(self) -> list[TypePattern]:
        return [TypePattern.parse(t) for t in self.input_types]

    @property
    def output_patterns(self) -> list[TypePattern]:
        return [TypePattern.parse(t) for t in self.output_types]

    def to_text(self) -> str:
        """Canonical serialisation; these bytes feed the measurement."""
        policy = "none" if self.minimisation_policy is None else self.minimisation_policy.to_text()
        lines = [
            f"name: {self.name}",
            f"version: {self.version}",
            f"input_types: {', '.join(self.input_types)}",
            f"output_types: {', '.join(self.output_types)}",
            f"sink: {'true' if self.sink else 'false'}",
            f"minimisation_policy: {policy}",
            f"callback: {'true' if self.regulator_callback_declared else 'false'}",
        ]
        return "\n".join(lines) + "\n"

    def to_bytes(self) -> bytes:
        return self.to_text().encode("utf-8")

    @classmethod
    def parse(cls, text: str) -> "TEManifest":
        values = parse_keyvalue(text)
        missing = [k for k in MANIFEST_FIELDS if k not in values]
        if missing:
            raise ManifestError(f"manifest missing fields: {', '.join(missing)}")
        split = lambda v: tuple(s.strip() for s in v.split(",") if s.strip())  # noqa: E731
        return cls(
            name=values["name"],
            version=values["version"],
            input_types=split(values["input_types"]),
            output_types=split(values["output_types"]),
            sink=_parse_bool(values["sink"]),
            minimisation_policy=MinimisationPolicy.parse(values["minimisation_policy"]),
            regulator_callback_declared=_parse_bool(values["callback"]),
        )


def parse_keyvalue(text: str, multi: Iterable[str] = ()) -> dict[str, Any]:
    """Parse ``key: value`` lines; ``#`` comments and blank lines are skipped.

    Keys named in ``multi`` may repeat and are collected into lists.
    """
    multi = set(multi)
    out: dict[str, Any] = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        if not sep:
            raise ManifestError(f"line {n}: expected 'key: value'")
        key, value = key.strip(), value.strip()
        if key in multi:
            out.setdefault(key, []).append(value)
        elif key in out:
            raise ManifestError(f"line {n}: duplicate key {key!r}")
        else:
            out[key] = value
    return out


@dataclass(frozen=True)
class Measurement:
    value: bytes

    @property
    def hex(self) -> str:
        return self.value.hex()


def measure(manifest: TEManifest, code_image: bytes) -> Measurement:
    return Measurement(crypto.hash(pack_fields([b"te-measurement", manifest.to_bytes(), code_image])))


def code_image_of(fn: Callable) -> bytes:
    return inspect.getsource(fn).encode("utf-8")


# -- platform and instances ---------------------------------------------------------


class Platform:
    """Stand-in for attestation hardware: a signing key the regulator trusts."""

    def __init__(self, platform_id: str, rng: crypto.RandomSource | None = None):
        self.platform_id = platform_id
        self._key = crypto.generate_keypair(rng)

    @property
    def public_key(self) -> bytes:
        return self._key.public_key

    def quote(self, measurement: bytes, session_public_key: bytes, nonce: bytes) -> AttestationReport:
        unsigned = AttestationReport(measurement, session_public_key, nonce, self.platform_id, b"")
        return AttestationReport(measurement, session_public_key, nonce, self.platform_id,
                                 crypto.sign(self._key.private_key, unsigned.signed_part()))


class PlainInput(NamedTuple):
    type_id: TypeId
    subject: bytes
    payload: bytes
    digest: bytes = b""  # hash of the envelope bytes this came from


class Output(NamedTuple):
    type_id: TypeId
    subject: bytes
    payload: Any


@dataclass
class TEInstance:
    manifest: TEManifest
    code_image: bytes
    logic: Callable[[list[PlainInput]], list[Output]]
    platform: Platform
    producer: crypto.KeyPair
    rng: crypto.RandomSource = field(default_factory=crypto.SystemRandomSource)

    @property
    def measurement(self) -> Measurement:
        return measure(self.manifest, self.code_image)


def load_te(manifest: TEManifest, logic: Callable, platform: Platform,
            rng: crypto.RandomSource | None = None, code_image: bytes | None = None) -> TEInstance:
    rng = crypto.default_rng(rng)
    image = code_image if code_image is not None else code_image_of(logic)
    return TEInstance(manifest, image, logic, platform, crypto.generate_keypair(rng), rng)


class ExecutionContext:
    """Per-execution enclave state. Provisioned keys live only here."""

    def __init__(self, te: TEInstance):
        self.te_name = te.manifest.name
        self.measurement = te.measurement.value
        self.session = crypto.generate_encryption_keypair(te.rng)
        self._keys: dict[int, bytes] = {}
        self.nonce: bytes | None = None
        self.events: list[tuple[str, str]] = []
        self.alive = True

    def provision(self, slot: int, key: bytes) -> None:
        self._keys[slot] = key

    def key(self, slot: int) -> bytes:
        return self._keys[slot]

    def destroy(self) -> None:
        self._keys.clear()
        self.session = None
        self.alive = False


def attest(te: TEInstance, regulator_nonce: bytes, context: ExecutionContext) -> AttestationReport:
    context.nonce = regulator_nonce
    return te.platform.quote(te.measurement.value, context.session.public_key, regulator_nonce)


# -- channels -----------------------------------------------------------------


@dataclass
class ChannelLog:
    """Everything that crosses a TE boundary, as the host would see it."""

    records: list[tuple[str, str, bytes]] = field(default_factory=list)

    def send(self, te_name: str, kind: str, data: bytes) -> None:
        self.records.append((te_name, kind, data))

    def blob(self) -> bytes:
        return b"\n".join(d for _, _, d in self.records)


@dataclass
class Requester:
    """A human consumer of sink output, authenticated by vid key and role credential."""

    vid: bytes
    keypair: crypto.KeyPair
    credential: bytes

    def prove(self, report: AttestationReport, claimed: TypeId, subject: bytes,
              request_nonce: bytes) -> RequesterProof:
        msg = requester_challenge(report, claimed, subject, request_nonce)
        return RequesterProof(self.vid, self.keypair.public_key, self.credential,
                              crypto.sign(self.keypair.private_key, msg))


@dataclass
class TEResult:
    envelopes: list[Envelope] = field(default_factory=list)
    sink_output: list[Any] = field(default_factory=list)
    decisions: list[AccessDecision] = field(default_factory=list)
    events: list[tuple[str, str]] = field(default_factory=list)


def _resolve_sealing_key(sealing_key, type_id: TypeId) -> bytes:
    if isinstance(sealing_key, (bytes, bytearray)):
        return bytes(sealing_key)
    return sealing_key(type_id)


def run_te(te: TEInstance, inputs: Sequence[Envelope], regulator, *,
           producers: Iterable[bytes] = (), sealing_key: bytes | Callable[[TypeId], bytes] = b"",
           requester: Requester | None = None, channel: ChannelLog | None = None,
           context: ExecutionContext | None = None) -> TEResult:
    """Execute ``te`` over ``inputs`` under ``regulator``'s online access control.

    ``regulator`` needs ``challenge() -> bytes`` and ``handle(request_bytes) -> bytes``.
    Raises :class:`TEError` with ``ACCESS_DENIED`` or ``TYPE_VIOLATION``; in both
    cases nothing produced so far is returned. A ``context`` opened earlier
    (e.g. to read the store) is used and then destroyed.
    """
    channel = channel if channel is not None else ChannelLog()
    producers = list(producers)
    manifest = te.manifest
    in_patterns = manifest.input_patterns
    for env in inputs:
        if not any_match(in_patterns, env.type_id):
            raise TEError(TEError.TYPE_VIOLATION, f"input type {env.type_id} not in manifest")
    ctx = context if context is not None else ExecutionContext(te)
    result = TEResult()
    try:
        plain: list[PlainInput] = []
        for slot, env in enumerate(inputs):
            channel.send(manifest.name, "input", env.to_bytes())
            nonce = regulator.challenge()
            report = attest(te, nonce, ctx)
            ctx.events.append(("attest", str(env.type_id)))
            request_nonce = te.rng.bytes(16)
            proof = None
            if manifest.sink and requester is not None:
                proof = requester.prove(report, env.type_id, env.subject, request_nonce)
            request = AccessRequest(report, env.type_id, env.subject, env.wrapped_key,
                                    request_nonce, proof)
            wire = request.to_bytes()
            channel.send(manifest.name, "access-request", wire)
            ctx.events.append(("request", str(env.type_id)))
            reply = regulator.handle(wire)
            channel.send(manifest.name, "decision", reply)
            decision = AccessDecision.from_bytes(reply)
            result.decisions.append(decision)
            if not decision.granted:
                ctx.events.append(("deny", decision.reason))
                raise TEError(TEError.ACCESS_DENIED, decision.reason)
            data_key = crypto.open_from(ctx.session.private_key, decision.wrapped_key,
                                        provision_context(decision.decision_id, ctx.session.public_key))
            ctx.provision(slot, data_key)
            ctx.events.append(("provisioned", str(env.type_id)))
            payload = _open_any(env, ctx.key(slot), producers)
            ctx.events.append(("decrypt", str(env.type_id)))
            plain.append(PlainInput(env.type_id, env.subject, payload, crypto.hash(env.to_bytes())))

        outputs = list(te.logic(plain))
        out_patterns = manifest.output_patterns
        for out in outputs:
            if not any_match(out_patterns, out.type_id):
                raise TEError(TEError.TYPE_VIOLATION, f"output type {out.type_id} not declared")

        if manifest.sink:
            result.sink_output = _sink_outputs(outputs, manifest.minimisation_policy)
            for item in result.sink_output:
                channel.send(manifest.name, "sink", _sink_bytes(item))
        else:
            for out in outputs:
                if not isinstance(out.payload, (bytes, bytearray)):
                    raise TEError(TEError.TYPE_VIOLATION, "non-sink outputs must be bytes")
                env = crypto.seal(out.type_id, out.subject, bytes(out.payload),
                                  _resolve_sealing_key(sealing_key, out.type_id), te.producer, te.rng)
                result.envelopes.append(env)
            for env in result.envelopes:
                channel.send(manifest.name, "output", env.to_bytes())
        ctx.events.append(("output", str(len(outputs))))
        result.events = list(ctx.events)
        return result
    finally:
        ctx.destroy()


def _open_any(env: Envelope, key: bytes, producers: list[bytes]) -> bytes:
    for pk in producers:
        try:
            return crypto.open_envelope(env, key, pk)
        except crypto.EnvelopeError as exc:
            if exc.code != crypto.EnvelopeError.SIGNATURE_INVALID:
                raise
    raise crypto.EnvelopeError(crypto.EnvelopeError.SIGNATURE_INVALID, "no trusted producer signed this")


def _sink_outputs(outputs: list[Output], policy: MinimisationPolicy | None) -> list[Any]:
    if policy is None:
        raise TEError(TEError.TYPE_VIOLATION, "sink without minimisation policy")
    records = [o.payload for o in outputs]
    if policy.aggregate_only:
        return [minimise(records, policy)] if records else []
    if policy.notification_template is not None:
        return [render_notification(r, policy) for r in records]
    return [minimise(r, policy) for r in records]


def _sink_bytes(item: Any) -> bytes:
    if isinstance(item, str):
        return item.encode("utf-8")
    return json.dumps(item, sort_keys=True).encode("utf-8")
