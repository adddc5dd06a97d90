"""The online regulator.

Keeps the approved-TE registry, consent and approval stores and the static
rule base, and decides access requests online. A GRANT is the only path on
which a data key leaves the regulator, re-wrapped to the attested session
key of the requesting TE. Every decision is appended to a hash-chained audit
log.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from typing import Callable, Iterable

from . import crypto
from .audit import AuditLog, verify_audit  # noqa: F401 - re-exported
from .crypto import TypeId
from .framing import FramingError, i64, pack_fields
from .identity import Credential, IdentityAuthority
from .patterns import TypePattern, any_match
from .protocol import (
    DENY,
    EXPIRED_CONSENT,
    GRANT,
    NO_RULE,
    PREDICATE_MISSING,
    REQUESTER_UNAUTHENTICATED,
    STALE_NONCE,
    TE_UNKNOWN,
    TYPE_UNAUTHENTICATED,
    AccessDecision,
    AccessRequest,
    provision_context,
    requester_challenge,
)
from .rules import AuthRule, Bindings, PredicateTemplate
from .te import TEManifest, measure


class RegulatorError(Exception):
    STRUCTURAL_REJECT = "STRUCTURAL_REJECT"
    BAD_SIGNATURE = "BAD_SIGNATURE"
    EXPIRED = "EXPIRED"
    REPLAY = "REPLAY"

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}({detail})" if detail else code)
        self.code = code
        self.detail = detail


# -- predicates ---------------------------------------------------------------


@dataclass(frozen=True)
class ConsentPredicate:
    subject_vid: bytes
    subject_public_key: bytes
    verb: str
    object: str
    scope: tuple[str, ...]
    expiry: int
    nonce: bytes
    signature: bytes = b""

    def message(self) -> bytes:
        return pack_fields([b"consent", self.subject_vid, self.verb.encode(), self.object.encode(),
                            "\n".join(self.scope).encode(), i64(self.expiry), self.nonce])

    def covers(self, type_id: TypeId) -> bool:
        return any_match([TypePattern.parse(s) for s in self.scope], type_id)


def make_consent(individual, vid, verb: str, obj: str, scope: Iterable[str], expiry: int,
                 rng: crypto.RandomSource | None = None) -> ConsentPredicate:
    """Build and sign a consent predicate with the individual's vid key."""
    kp = individual.keypair(vid)
    c = ConsentPredicate(vid.value, kp.public_key, verb, obj, tuple(scope), expiry,
                         crypto.default_rng(rng).bytes(16))
    return ConsentPredicate(c.subject_vid, c.subject_public_key, c.verb, c.object, c.scope,
                            c.expiry, c.nonce, crypto.sign(kp.private_key, c.message()))


def revocation_message(nonce: bytes) -> bytes:
    return pack_fields([b"revoke-consent", nonce])


@dataclass(frozen=True)
class ApprovalPredicate:
    approver: str
    subject_vid: bytes
    attribute: str
    obtained_via: str  # "direct" | "blind-credential"
    proof: bytes  # approver signature, or serialised Credential

    def message(self) -> bytes:
        return pack_fields([b"approval", self.approver.encode(), self.subject_vid,
                            self.attribute.encode()])


def direct_approval(approver: str, keypair: crypto.KeyPair, subject_vid: bytes,
                    attribute: str) -> ApprovalPredicate:
    a = ApprovalPredicate(approver, subject_vid, attribute, "direct", b"")
    return ApprovalPredicate(approver, subject_vid, attribute, "direct",
                             crypto.sign(keypair.private_key, a.message()))


def credential_approval(credential: Credential) -> ApprovalPredicate:
    return ApprovalPredicate(credential.issuer, credential.subject_vid, credential.attribute,
                             "blind-credential", credential.to_bytes())


# -- registry -------------------------------------------------------------------


@dataclass(frozen=True)
class RegistryEntry:
    measurement: bytes
    manifest: TEManifest
    risk_annotation: str


def structural_checks(manifest: TEManifest) -> list[str]:
    """Names of failed approval-time checks (empty if the manifest is acceptable)."""
    failed = []
    if not manifest.regulator_callback_declared:
        failed.append("callback")
    if not manifest.output_types:
        failed.append("output_types")
    if manifest.sink and manifest.minimisation_policy is None:
        failed.append("minimisation")
    return failed


@dataclass
class DecisionRecord:
    decision_id: bytes
    verdict: str
    reason: str
    rule_id: str | None
    bindings: dict[str, str]
    claimed_type: TypeId
    time: int
    key_released: bool


class Regulator:
    def __init__(self, name: str, authority: IdentityAuthority | None = None,
                 rng: crypto.RandomSource | None = None, clock: Callable[[], int] | None = None,
                 rules: Iterable[AuthRule] = ()):
        self.name = name
        self._rng = crypto.default_rng(rng)
        self._clock = clock or (lambda: 0)
        self.signing_key = crypto.generate_keypair(self._rng)
        self.encryption_key = crypto.generate_encryption_keypair(self._rng)
        self.authority = authority
        self._lock = threading.RLock()
        self.registry: dict[bytes, RegistryEntry] = {}
        self.published: list[str] = []
        self.trusted_platforms: dict[str, bytes] = {}
        self.rules: list[AuthRule] = sorted(rules, key=AuthRule.sort_key)
        self._consents: dict[bytes, ConsentPredicate] = {}
        self._revoked: set[bytes] = set()
        self._approvals: set[tuple[str, bytes, str]] = set()
        self.approver_keys: dict[str, bytes] = {}
        self.credential_issuers: dict[str, Callable[[str], crypto.BlindPublicKey | None]] = {}
        self._pending_nonces: set[bytes] = set()
        self._seen_request_nonces: set[bytes] = set()
        self.decisions: dict[bytes, DecisionRecord] = {}
        self.audit = AuditLog(self._clock)
        self.events: list[tuple[str, str]] = []

    # public material

    @property
    def public_key(self) -> bytes:
        """Envelope-wrapping key."""
        return self.encryption_key.public_key

    @property
    def verification_key(self) -> bytes:
        return self.signing_key.public_key

    def now(self) -> int:
        return int(self._clock())

    # configuration

    def trust_platform(self, platform_id: str, public_key: bytes) -> None:
        self.trusted_platforms[platform_id] = public_key

    def add_rules(self, rules: Iterable[AuthRule]) -> None:
        with self._lock:
            self.rules = sorted([*self.rules, *rules], key=AuthRule.sort_key)

    def trust_approver(self, approver: str, public_key: bytes) -> None:
        self.approver_keys[approver] = public_key

    def trust_issuer(self, issuer: str, key_for_attribute) -> None:
        """``key_for_attribute`` maps an attribute to the issuer's blind key (or None)."""
        if not callable(key_for_attribute):
            keys = dict(key_for_attribute)
            key_for_attribute = keys.get
        self.credential_issuers[issuer] = key_for_attribute

    def _log(self, step: str, detail: str = "") -> None:
        self.events.append((step, detail))

    # TE approval

    def approve_te(self, manifest: TEManifest, code_image: bytes, risk_annotation: str) -> RegistryEntry:
        if not risk_annotation.strip():
            raise RegulatorError(RegulatorError.STRUCTURAL_REJECT, "risk_annotation")
        failed = structural_checks(manifest)
        if failed:
            raise RegulatorError(RegulatorError.STRUCTURAL_REJECT, failed[0])
        m = measure(manifest, code_image).value
        entry = RegistryEntry(m, manifest, risk_annotation)
        with self._lock:
            self.registry[m] = entry
            self.published.append(manifest.to_text())
        self.audit.append("approval", pack_fields([m, manifest.to_bytes(), risk_annotation.encode()]))
        self._log("te_approved", manifest.name)
        return entry

    # consent and approval

    def _authenticate_vid(self, vid: bytes, public_key: bytes) -> bool:
        if self.authority is None:
            return True
        return self.authority.authenticate(vid, public_key)

    def record_consent(self, predicate: ConsentPredicate) -> str:
        try:
            sig_ok = crypto.verify(predicate.subject_public_key, predicate.message(), predicate.signature)
        except crypto.MalformedKeyError:
            sig_ok = False
        if not sig_ok or not self._authenticate_vid(predicate.subject_vid, predicate.subject_public_key):
            raise RegulatorError(RegulatorError.BAD_SIGNATURE, "consent")
        if predicate.expiry <= self.now():
            raise RegulatorError(RegulatorError.EXPIRED, "consent")
        with self._lock:
            if predicate.nonce in self._consents or predicate.nonce in self._revoked:
                raise RegulatorError(RegulatorError.REPLAY, "consent nonce")
            self._consents[predicate.nonce] = predicate
        self.audit.append("consent", predicate.message() + predicate.signature)
        self._log("consent_recorded", predicate.verb)
        return "stored"

    def revoke_consent(self, nonce: bytes, signature: bytes) -> None:
        with self._lock:
            c = self._consents.get(nonce)
            if c is None or not crypto.verify(c.subject_public_key, revocation_message(nonce), signature):
                raise RegulatorError(RegulatorError.BAD_SIGNATURE, "revocation")
            del self._consents[nonce]
            self._revoked.add(nonce)
        self.audit.append("consent", revocation_message(nonce) + signature)
        self._log("consent_revoked", c.verb)

    def record_approval(self, predicate: ApprovalPredicate) -> str:
        if predicate.obtained_via == "direct":
            pk = self.approver_keys.get(predicate.approver)
            ok = pk is not None and crypto.verify(pk, predicate.message(), predicate.proof)
        elif predicate.obtained_via == "blind-credential":
            ok = self._credential_ok(predicate.proof, predicate.approver, predicate.subject_vid,
                                     predicate.attribute)
        else:
            ok = False
        if not ok:
            raise RegulatorError(RegulatorError.BAD_SIGNATURE, "approval")
        with self._lock:
            self._approvals.add((predicate.approver, predicate.subject_vid, predicate.attribute))
        self.audit.append("approval", predicate.message())
        self._log("approval_recorded", predicate.attribute)
        return "stored"

    def _credential_ok(self, blob: bytes, issuer: str | None, subject_vid: bytes,
                       attribute: str | None) -> Credential | None:
        try:
            cred = Credential.from_bytes(blob)
        except (FramingError, UnicodeDecodeError):
            return None
        if issuer is not None and cred.issuer != issuer:
            return None
        if attribute is not None and cred.attribute != attribute:
            return None
        if cred.subject_vid != subject_vid:
            return None
        keys = self.credential_issuers.get(cred.issuer)
        pk = keys(cred.attribute) if keys else None
        if pk is None or not cred.verify(pk):
            return None
        return cred

    def has_approval(self, approver: str, subject_vid: bytes, attribute: str) -> bool:
        return (approver, subject_vid, attribute) in self._approvals

    # online authorisation

    def challenge(self) -> bytes:
        nonce = self._rng.bytes(16)
        with self._lock:
            self._pending_nonces.add(nonce)
        return nonce

    def handle(self, request_bytes: bytes) -> bytes:
        """Wire entry point: ARQ1 request in, signed decision out."""
        try:
            request = AccessRequest.from_bytes(request_bytes)
        except (FramingError, ValueError):
            return self._decide(DENY, TE_UNKNOWN, None, {}, TypeId("unparseable"), None).to_bytes()
        return self.authorize(request).to_bytes()

    def authorize(self, request: AccessRequest, clock: Callable[[], int] | None = None) -> AccessDecision:
        now = int(clock()) if clock is not None else self.now()
        report = request.attestation_report
        claimed = request.claimed_input_type

        def deny(reason, rule_id=None, bindings=None):
            return self._decide(DENY, reason, rule_id, bindings or {}, claimed, None, now)

        # (1) attestation: platform signature, freshness, registry
        pk = self.trusted_platforms.get(report.platform_id)
        try:
            sig_ok = pk is not None and crypto.verify(pk, report.signed_part(), report.signature)
        except crypto.MalformedKeyError:
            sig_ok = False
        if not sig_ok:
            return deny(TE_UNKNOWN)
        with self._lock:
            fresh = report.nonce in self._pending_nonces and request.request_nonce not in self._seen_request_nonces
            self._pending_nonces.discard(report.nonce)
            self._seen_request_nonces.add(request.request_nonce)
        if not fresh:
            return deny(STALE_NONCE)
        entry = self.registry.get(report.measurement)
        if entry is None:
            return deny(TE_UNKNOWN)
        manifest = entry.manifest
        self._log("te_attested", manifest.name)

        # (2) requester authentication for sinks
        bindings = Bindings()
        role = None
        if manifest.sink:
            role = self._authenticate_requester(request)
            if role is None:
                return deny(REQUESTER_UNAUTHENTICATED)
            self._log("requester_authenticated", role)

        # data type authentication: the wrapped key only opens under the sealed type and subject
        if not any_match(manifest.input_patterns, claimed):
            return deny(NO_RULE)
        try:
            data_key = crypto.unwrap_data_key(self.encryption_key.private_key, request.wrapped_key,
                                              claimed, request.subject_vid)
        except (crypto.DecryptError, crypto.MalformedKeyError):
            return deny(TYPE_UNAUTHENTICATED)
        self._log("type_authenticated", str(claimed))

        # (3) rule selection, first match wins
        rule = self._select_rule(manifest.name, report.measurement.hex(), claimed, role, now)
        if rule is None:
            return deny(NO_RULE)
        if rule.data_type_pattern.variable is not None:
            bindings.values[rule.data_type_pattern.variable] = request.subject_vid.hex()
        if rule.requester_pattern is not None:
            bindings.values[rule.requester_pattern.variable] = request.requester.vid.hex()
        self._log("rule_instantiated", rule.rule_id)

        # (4) predicates
        failure = self.check_predicates(rule.required_predicates, bindings, claimed, now)
        if failure is not None:
            return deny(failure, rule.rule_id, bindings.values)

        # (5) provision the key to the attested session
        return self._decide(GRANT, "", rule.rule_id, bindings.values, claimed,
                            (data_key, report.session_public_key), now)

    def _authenticate_requester(self, request: AccessRequest) -> str | None:
        proof = request.requester
        if proof is None:
            return None
        cred = self._credential_ok(proof.credential, None, proof.vid, None)
        if cred is None or not cred.attribute.startswith("role:"):
            return None
        if not self._authenticate_vid(proof.vid, proof.public_key):
            return None
        msg = requester_challenge(request.attestation_report, request.claimed_input_type,
                                  request.subject_vid, request.request_nonce)
        try:
            if not crypto.verify(proof.public_key, msg, proof.signature):
                return None
        except crypto.MalformedKeyError:
            return None
        return cred.attribute[len("role:"):]

    def _select_rule(self, te_name: str, measurement_hex: str, claimed: TypeId,
                     role: str | None, now: int) -> AuthRule | None:
        for rule in self.rules:
            if not rule.matches_te(te_name, measurement_hex):
                continue
            if not rule.data_type_pattern.matches(claimed):
                continue
            if rule.requester_pattern is not None and rule.requester_pattern.role != role:
                continue
            if rule.requester_pattern is None and role is not None:
                continue
            if not rule.in_window(now):
                continue
            return rule
        return None

    def check_predicates(self, templates: Iterable[PredicateTemplate], bindings: Bindings,
                         claimed: TypeId, now: int) -> str | None:
        """First failing template's deny reason, or None if all hold."""
        with self._lock:
            consents = list(self._consents.values())
            approvals = set(self._approvals)
        for t in templates:
            a, b, c = (bindings.resolve(x) for x in t.args)
            if t.kind == "consent":
                candidates = [p for p in consents
                              if p.subject_vid.hex() == a and p.verb == b and p.object == c
                              and p.covers(claimed)]
                if not candidates:
                    return PREDICATE_MISSING
                if all(p.expiry <= now for p in candidates):
                    return EXPIRED_CONSENT
            else:
                try:
                    subject = bytes.fromhex(b)
                except ValueError:
                    return PREDICATE_MISSING
                if (a, subject, c) not in approvals:
                    return PREDICATE_MISSING
        return None

    def _decide(self, verdict: str, reason: str, rule_id: str | None, bindings: dict[str, str],
                claimed: TypeId, grant_material, now: int | None = None, purpose: str = "") -> AccessDecision:
        now = self.now() if now is None else now
        decision_id = self._rng.bytes(16)
        wrapped = b""
        if verdict == GRANT and grant_material is not None:
            data_key, session_pk = grant_material
            wrapped = crypto.seal_to(session_pk, data_key, provision_context(decision_id, session_pk), self._rng)
        unsigned = AccessDecision(verdict, decision_id, reason, wrapped, purpose)
        decision = AccessDecision(verdict, decision_id, reason, wrapped, purpose,
                                  crypto.sign(self.signing_key.private_key, unsigned.signed_part()))
        with self._lock:
            self.decisions[decision_id] = DecisionRecord(decision_id, verdict, reason, rule_id,
                                                         dict(bindings), claimed, now, bool(wrapped))
        self.audit.append("access", pack_fields([decision_id, verdict.encode(), reason.encode(),
                                                 claimed.to_bytes(), b"key" if wrapped else b""]))
        if wrapped:
            self._log("key_provisioned", decision_id.hex())
        else:
            self._log("decision", f"{verdict}:{reason}")
        return decision

    def replay(self, decision_id: bytes) -> str | None:
        """Re-evaluate a recorded decision's predicates against the stored facts."""
        rec = self.decisions[decision_id]
        rule = next(r for r in self.rules if r.rule_id == rec.rule_id)
        return self.check_predicates(rule.required_predicates, Bindings(dict(rec.bindings)),
                                     rec.claimed_type, rec.time)

    # linking

    def authorize_link(self, authority_name: str, purpose: str) -> AccessDecision:
        """Grant or deny cross-organisation linking for a purpose (type ``Link/<purpose>``)."""
        claimed = TypeId(f"Link/{purpose}")
        now = self.now()
        for rule in self.rules:
            if rule.matches_te(authority_name, "") and rule.data_type_pattern.matches(claimed) \
                    and rule.requester_pattern is None and rule.in_window(now):
                failure = self.check_predicates(rule.required_predicates, Bindings(), claimed, now)
                if failure is None:
                    return self._decide(GRANT, "", rule.rule_id, {}, claimed, None, now, purpose)
                return self._decide(DENY, failure, rule.rule_id, {}, claimed, None, now, purpose)
        return self._decide(DENY, NO_RULE, None, {}, claimed, None, now, purpose)


# -- regulator as a TE ----------------------------------------------------------------


class RegulatorBootstrap:
    """Holds a regulator's master seed and releases it only to an attested regulator build."""

    def __init__(self, rng: crypto.RandomSource | None = None):
        self._rng = crypto.default_rng(rng)
        self._seed = self._rng.bytes(32)
        self.registry: set[bytes] = set()
        self.trusted_platforms: dict[str, bytes] = {}
        self._pending: set[bytes] = set()

    def register(self, manifest: TEManifest, code_image: bytes) -> bytes:
        m = measure(manifest, code_image).value
        self.registry.add(m)
        return m

    def challenge(self) -> bytes:
        n = self._rng.bytes(16)
        self._pending.add(n)
        return n

    def provision(self, report) -> bytes:
        """Master seed wrapped to the report's session key; raises on any attestation failure."""
        pk = self.trusted_platforms.get(report.platform_id)
        if pk is None or not crypto.verify(pk, report.signed_part(), report.signature):
            raise RegulatorError(TE_UNKNOWN, "platform")
        if report.nonce not in self._pending:
            raise RegulatorError(STALE_NONCE)
        self._pending.discard(report.nonce)
        if report.measurement not in self.registry:
            raise RegulatorError(TE_UNKNOWN, "measurement")
        return crypto.seal_to(report.session_public_key, self._seed, b"regulator-seed", self._rng)


def boot_regulator(name: str, bootstrap: RegulatorBootstrap, te, **kwargs) -> Regulator:
    """Attest the regulator's own build to ``bootstrap`` and start it from the released seed."""
    from .te import ExecutionContext, attest

    ctx = ExecutionContext(te)
    try:
        report = attest(te, bootstrap.challenge(), ctx)
        sealed = bootstrap.provision(report)
        seed = crypto.open_from(ctx.session.private_key, sealed, b"regulator-seed")
    finally:
        ctx.destroy()
    return Regulator(name, rng=crypto.SeededRandomSource(seed, "regulator"), **kwargs)
