"""Test-side machinery shared by the unit and acceptance suites.

Nothing here imports from the code under test's decision logic: the gate
oracle below is written from the rule semantics alone, and the harness only
uses the public API to build contexts.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from pbdkit import crypto
from pbdkit.crypto import TypeId
from pbdkit.protocol import (
    EXPIRED_CONSENT,
    GRANT,
    NO_RULE,
    PREDICATE_MISSING,
    TE_UNKNOWN,
)
from pbdkit.regulator import Regulator, direct_approval, make_consent
from pbdkit.rules import AuthRule, is_variable, rules_for
from pbdkit.scenarios.common import SimClock, World
from pbdkit.te import ExecutionContext, MinimisationPolicy, TEError, TEManifest, load_te, run_te

UNMATCHED_TYPE = "Gate/Unmatched"
CONSENT_TTL = 100


@dataclass(frozen=True)
class GateContext:
    attested: bool
    consent: bool
    rule_match: bool
    fresh: bool

    def __str__(self) -> str:
        return "".join("1" if v else "0" for v in (self.attested, self.consent, self.rule_match, self.fresh))


ALL_CONTEXTS = [GateContext(*bits) for bits in itertools.product((True, False), repeat=4)]


def gate_oracle(rule: AuthRule, ctx: GateContext) -> str:
    """Truth table of one rule: GRANT, or the first failing condition's reason."""
    if not ctx.attested:
        return TE_UNKNOWN
    if not ctx.rule_match:
        return NO_RULE
    if rule.required_predicates and not ctx.consent:
        return PREDICATE_MISSING
    if any(p.kind == "consent" for p in rule.required_predicates) and not ctx.fresh:
        return EXPIRED_CONSENT
    return GRANT


def _echo(inputs):
    return []


class GateHarness:
    """Builds each of the 16 contexts for a rule and asks a fresh regulator.

    The regulator holds the whole rule set addressed to it, so first-match
    selection is exercised too.
    """

    def __init__(self, rules: list[AuthRule], seed: int = 0):
        self.rules = rules
        self.world = World(seed, rsa_bits=1024)
        self.subject = self.world.person("gate-subject").register("GateOrg")
        self._staff = {}
        self._issuer = self.world.issuer(
            "GateHR", sorted({f"role:{r.requester_pattern.role}" for r in rules if r.requester_pattern}))
        self._approver = crypto.generate_keypair(self.world.fork("approver"))
        self._n = 0

    def _requester(self, role: str):
        if role not in self._staff:
            self._staff[role] = self.world.staff(f"gate-{role}", "GateOrg", role, self._issuer)
        return self._staff[role]

    def concrete_type(self, rule: AuthRule) -> TypeId:
        name = rule.data_type_pattern.name_glob.replace("*", "Probe").replace("?", "Q")
        return TypeId(name, "x" if rule.data_type_pattern.variable else None)

    def manifest_for(self, rule: AuthRule, claimed: TypeId) -> TEManifest:
        name = rule.te_pattern.replace("*", "Probe")
        sink = rule.requester_pattern is not None
        inputs = tuple(sorted({str(claimed), f"{UNMATCHED_TYPE}(x)"}))
        return TEManifest(name, "gate", inputs, ("Gate/Out",), sink,
                          MinimisationPolicy(("v",)) if sink else None, True)

    def decide(self, rule: AuthRule, ctx: GateContext) -> tuple[str, bool]:
        """(GRANT or deny reason, whether any key was released)."""
        self._n += 1
        w = self.world
        reg_name = rule.regulator or "R"
        clock = SimClock(w.clock.now)
        reg = Regulator(reg_name, w.authority, rng=w.fork(f"gate-reg:{self._n}"), clock=clock,
                        rules=rules_for(self.rules, reg_name))
        reg.trust_platform(w.platform.platform_id, w.platform.public_key)
        reg.trust_issuer(self._issuer.name, self._issuer.public_key)

        requester = self._requester(rule.requester_pattern.role) if rule.requester_pattern else None
        bindings = {}
        if rule.data_type_pattern.variable:
            bindings[rule.data_type_pattern.variable] = self.subject.value
        if rule.requester_pattern:
            bindings[rule.requester_pattern.variable] = requester.vid

        claimed = self.concrete_type(rule)
        if not ctx.rule_match:
            claimed = TypeId(UNMATCHED_TYPE, "x" if rule.data_type_pattern.variable else None)
        manifest = self.manifest_for(rule, self.concrete_type(rule))
        te = load_te(manifest, _echo, w.platform, w.fork(f"gate-te:{self._n}"))
        reg.approve_te(manifest, te.code_image if ctx.attested else te.code_image + b"#other", "gate")

        if ctx.consent:
            for p in rule.required_predicates:
                self._satisfy(reg, p, bindings, clock)
        if not ctx.fresh:
            clock.advance(CONSENT_TTL + 1)

        subject = self.subject.value if claimed.subject_parameter else b""
        producer = crypto.generate_keypair(w.fork(f"gate-producer:{self._n}"))
        env = crypto.seal(claimed, subject, b"probe", reg.public_key, producer, w.fork(f"gate-env:{self._n}"))
        try:
            run_te(te, [env], reg, producers=[producer.public_key], requester=requester,
                   context=ExecutionContext(te))
            outcome = GRANT
        except TEError as exc:
            outcome = exc.reason if exc.code == TEError.ACCESS_DENIED else exc.code
        released = any(rec.key_released for rec in reg.decisions.values())
        return outcome, released

    def _satisfy(self, reg: Regulator, template, bindings, clock) -> None:
        def resolve(term):
            v = bindings.get(term) if is_variable(term) else term
            return v.hex() if isinstance(v, bytes) else v

        a, b, c = template.args
        if template.kind == "consent":
            person = self.world.person("gate-subject")
            consent = make_consent(person, self.subject, b, resolve(c), ["*"], clock.now + CONSENT_TTL,
                                   self.world.fork(f"gate-consent:{self._n}"))
            reg.record_consent(consent)
        else:
            reg.trust_approver(a, self._approver.public_key)
            subject = bindings[b] if is_variable(b) else bytes.fromhex(b)
            reg.record_approval(direct_approval(a, self._approver, subject, c))


def truth_table(rules: list[AuthRule], seed: int = 0) -> list[tuple[str, str, str, str, bool]]:
    """(rule_id, context, expected, actual, key_released) for every rule and context."""
    h = GateHarness(rules, seed)
    rows = []
    for rule in rules:
        for ctx in ALL_CONTEXTS:
            actual, released = h.decide(rule, ctx)
            rows.append((rule.rule_id, str(ctx), gate_oracle(rule, ctx), actual, released))
    return rows
