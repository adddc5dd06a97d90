"""Direct benefit transfer.

The ministry sends a signed payment file against DBT-specific vids. The PFMS
TE (gated by R1) splits it into per-beneficiary payment orders. The NPCI
mapper TE (R3) joins each order with the beneficiary's mapping entry and
emits a credit order for the beneficiary's bank (R4 of that bank) and a debit
order for the sponsor bank (R2). Only the mapper's execution context ever holds
a person's DBT vid and bank vid together.

Script actions: ``onboard``, ``pay [tamper=1]``.
"""

from __future__ import annotations

import functools
import json
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

from .. import crypto
from ..crypto import Envelope, TypeId
from ..framing import FramingError, frame, from_u64, pack_fields, u64, unframe, unpack_fields
from ..regulator import Regulator, credential_approval
from ..store import EncryptedStore
from ..te import ChannelLog, ExecutionContext, Output, TEError, TEInstance, code_image_of, run_te
from .common import ConfigError, ScenarioConfig, ScenarioResult, Step, World, require_manifests

PAY_MAGIC = b"PAY1"
APPROVER = "DBT-Approver"
ATTRIBUTE = "DBT-beneficiary"

T_PAYFILE = TypeId("DBT/PaymentFile")
T_ORDER = TypeId("DBT/PaymentOrder", "x")
T_MAPPING = TypeId("DBT/Mapping", "x")
T_DEBIT = TypeId("Sponsor/DebitOrder")

MANIFESTS = ("PFMS", "NPCIMapper", "SponsorBankCore", "BeneficiaryBankCore")


class PaymentFileRejected(Exception):
    pass


# -- payment file --------------------------------------------------------------


@dataclass(frozen=True)
class PaymentEntry:
    dbt_vid: bytes
    scheme: str
    amount: int

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("amounts must be positive")


@dataclass(frozen=True)
class PaymentFile:
    entries: tuple[PaymentEntry, ...]
    signature: bytes = b""

    def _body(self) -> bytes:
        return pack_fields([pack_fields([e.dbt_vid, e.scheme.encode(), u64(e.amount)])
                            for e in self.entries])

    def signed_part(self) -> bytes:
        return frame(PAY_MAGIC, [self._body()])

    def to_bytes(self) -> bytes:
        return frame(PAY_MAGIC, [self._body(), self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "PaymentFile":
        body, sig = unframe(PAY_MAGIC, data, 2)
        entries = []
        for raw in unpack_fields(body):
            vid, scheme, amount = unpack_fields(raw)
            entries.append(PaymentEntry(vid, scheme.decode(), from_u64(amount)))
        return cls(tuple(entries), sig)

    def signed(self, keypair: crypto.KeyPair) -> "PaymentFile":
        return PaymentFile(self.entries, crypto.sign(keypair.private_key, self.signed_part()))

    def verify(self, public_key: bytes) -> bool:
        return crypto.verify(public_key, self.signed_part(), self.signature)


# -- TE logic ------------------------------------------------------------------------


def pfms_logic(inputs, ministry_key):
    out = []
    for inp in inputs:
        try:
            pf = PaymentFile.from_bytes(inp.payload)
        except (FramingError, ValueError) as exc:
            raise PaymentFileRejected(f"malformed payment file: {exc}") from exc
        if not pf.verify(ministry_key):
            raise PaymentFileRejected("ministry signature does not verify")
        for k, e in enumerate(pf.entries):
            out.append(Output(TypeId("DBT/PaymentOrder", "x"), e.dbt_vid,
                              json.dumps({"ref": k, "scheme": e.scheme, "amount": e.amount},
                                         sort_keys=True).encode()))
    return out


def mapper_logic(inputs):
    order = next(i for i in inputs if i.type_id.name == "DBT/PaymentOrder")
    mapping = next(i for i in inputs if i.type_id.name == "DBT/Mapping")
    if order.subject != mapping.subject:
        raise ValueError("order and mapping are for different subjects")
    o = json.loads(order.payload)
    m = json.loads(mapping.payload)
    if m["dbt_vid"] != order.subject.hex():
        raise ValueError("mapping entry does not name its subject")
    # fresh reference that neither bank can tie back to the payment file entry
    ref = crypto.hash(pack_fields([b"transfer-ref", order.payload, mapping.payload])).hex()[:20]
    credit = {"account": m["bank_vid"], "amount": o["amount"], "ref": ref}
    debit = {"scheme": o["scheme"], "amount": o["amount"], "ref": ref}
    return [
        Output(TypeId(f"{m['bank']}/CreditOrder"), b"", json.dumps(credit, sort_keys=True).encode()),
        Output(TypeId("Sponsor/DebitOrder"), b"", json.dumps(debit, sort_keys=True).encode()),
    ]


def bank_logic(inputs):
    return [Output(TypeId("Bank/LedgerEntry"), b"", json.loads(inp.payload)) for inp in inputs]


# -- the run -------------------------------------------------------------------------


@dataclass
class Beneficiary:
    index: int
    bank: str
    dbt_vid: bytes = b""
    bank_vid: bytes = b""
    mapped: bool = True
    approved: bool = True


@dataclass
class Ledger:
    """Bank-side view of one payment run."""

    credits: list[dict] = field(default_factory=list)
    debits: list[dict] = field(default_factory=list)
    rejected: list[tuple[int, str]] = field(default_factory=list)

    @property
    def total_credits(self) -> int:
        return sum(c["amount"] for c in self.credits)

    @property
    def total_debits(self) -> int:
        return sum(d["amount"] for d in self.debits)


class DBTRun:
    def __init__(self, config: ScenarioConfig, seed: int, rules, manifests, workdir: str | Path | None = None):
        require_manifests(manifests, MANIFESTS)
        self.config = config
        self.world = w = World(seed, rsa_bits=config.int("rsa_bits", 1024))
        self.result = ScenarioResult("dbt", seed)
        self.banks = config.list("banks", "BankA,BankB")
        self.schemes = config.list("schemes", "PM-KISAN")
        if not self.banks or not self.schemes:
            raise ConfigError("need at least one bank and one scheme")
        self._tmp = None
        if workdir is None:
            self._tmp = tempfile.TemporaryDirectory(prefix="pbdkit-dbt-")
            workdir = self._tmp.name
        self.workdir = Path(workdir)

        self.r1 = w.regulator("R1", rules)
        self.r2 = w.regulator("R2", rules)
        self.r3 = w.regulator("R3", rules)
        self.r4 = {b: w.regulator(f"R4-{b}", rules) for b in self.banks}
        self.result.regulators.update(w.regulators)

        self.ministry = crypto.generate_keypair(w.fork("ministry"))
        pfms_fn = functools.partial(pfms_logic, ministry_key=self.ministry.public_key)
        pfms_image = code_image_of(pfms_logic) + b"\nministry-key: " + self.ministry.public_key.hex().encode()
        self.pfms = w.deploy(manifests["PFMS"], pfms_fn, [self.r1], code_image=pfms_image,
                             risk="splits signed payment files; sees DBT vids only")
        self.mapper = w.deploy(manifests["NPCIMapper"], mapper_logic, [self.r3],
                               risk="joins DBT vid to bank vid; in-context only")
        self.sponsor = w.deploy(manifests["SponsorBankCore"], bank_logic, [self.r2],
                                risk="sponsor bank debits per scheme")
        self.bank_tes = {b: w.deploy(manifests["BeneficiaryBankCore"], bank_logic, [self.r4[b]],
                                     risk=f"{b} credits customer accounts") for b in self.banks}

        registry = w.issuer("BankingRegistry", ["role:operator"])
        for reg in w.regulators.values():
            reg.trust_issuer(registry.name, registry.public_key)
        self.operators = {name: w.staff(f"operator-{name}", name, "operator", registry)
                          for name in ["Sponsor", *self.banks]}

        self.approver = w.issuer(APPROVER, [ATTRIBUTE])
        self.r3.trust_issuer(APPROVER, self.approver.public_key)

        self.channels = {name: ChannelLog() for name in
                         ["ministry", "pfms-host", "npci-host", "sponsor-host", *(f"bank:{b}" for b in self.banks)]}
        self.store_path = self.workdir / "npci.store"
        self.store = EncryptedStore(w.fork("npci-index").bytes(32), self.store_path, rng=w.fork("npci-store"))
        self.balances: dict[str, dict[str, int]] = {b: {} for b in self.banks}
        self.scheme_debits: dict[str, int] = {s: 0 for s in self.schemes}
        self.beneficiaries: list[Beneficiary] = []
        self.ledgers: list[Ledger] = []
        self.expected_credits: list[tuple[str, str, int]] = []

    def close(self) -> None:
        if self._tmp is not None:
            self._tmp.cleanup()
            self._tmp = None

    # onboarding (the dashed arrows)

    def onboard(self, count: int, unmapped: int = 0, unapproved: int = 0) -> None:
        w = self.world
        start = len(self.beneficiaries)
        for i in range(start, start + count):
            b = Beneficiary(i, self.banks[i % len(self.banks)])
            b.mapped = i - start >= unmapped
            b.approved = i - start >= unmapped + unapproved or i - start < unmapped
            person = w.person(f"beneficiary-{i}")
            known = person.register(APPROVER)
            dbt = person.register("DBT")
            bank = person.register(b.bank)
            b.dbt_vid, b.bank_vid = dbt.value, bank.value
            # the bank opens an account for its own customer vid
            self.balances[b.bank][bank.value.hex()] = 0
            if b.approved:
                self.approver.enrol_subject(known.value, person.keypair(known).public_key, [ATTRIBUTE])
                cred = person.obtain_blind_credential(self.approver, known, dbt, ATTRIBUTE)
                self.r3.record_approval(credential_approval(cred))
            if b.mapped:
                entry = {"dbt_vid": dbt.value.hex(), "bank_vid": bank.value.hex(), "bank": b.bank}
                env = crypto.seal(T_MAPPING, dbt, json.dumps(entry, sort_keys=True).encode(),
                                  self.r3.public_key, person.keypair(dbt), w.fork(f"mapping:{i}"))
                self.channels["npci-host"].send("NPCI", "mapping-upload", env.to_bytes())
                self.store.put(env)
            self.beneficiaries.append(b)

    # payment

    def payment_file(self, beneficiaries=None) -> PaymentFile:
        rng = self.world.fork(f"payfile:{len(self.ledgers)}")
        entries = []
        for b in beneficiaries if beneficiaries is not None else self.beneficiaries:
            scheme = self.schemes[b.index % len(self.schemes)]
            entries.append(PaymentEntry(b.dbt_vid, scheme, 100 + crypto.randbelow(rng, 9900)))
        return PaymentFile(tuple(entries)).signed(self.ministry)

    def _route(self, type_id: TypeId) -> bytes:
        prefix = type_id.name.split("/", 1)[0]
        if prefix == "Sponsor":
            return self.r2.public_key
        return self.r4[prefix].public_key

    def dbt_run(self, payment_file: PaymentFile) -> Ledger:
        """Run one payment file through all four stages; returns the bank-side ledger."""
        w = self.world
        ledger = Ledger()
        self.ledgers.append(ledger)
        env = crypto.seal(T_PAYFILE, None, payment_file.to_bytes(), self.r1.public_key, self.ministry,
                          w.fork(f"payfile-env:{len(self.ledgers)}"))
        self.channels["ministry"].send("ministry", "payment-file", env.to_bytes())
        try:
            orders = run_te(self.pfms, [env], self.r1, producers=[self.ministry.public_key],
                            sealing_key=self.r3.public_key, channel=self.channels["pfms-host"]).envelopes
        except (PaymentFileRejected, TEError) as exc:
            raise PaymentFileRejected(str(exc)) from exc

        debits: list[Envelope] = []
        credits: dict[str, list[Envelope]] = {b: [] for b in self.banks}
        for k, order in enumerate(orders):
            self.channels["npci-host"].send("NPCI", "order-in", order.to_bytes())
            ctx = ExecutionContext(self.mapper)
            found = self.store.get(order.subject, T_MAPPING, ctx)
            if not found:
                ctx.destroy()
                ledger.rejected.append((k, "MAPPING_MISSING"))
                continue
            producer = w.authority.lookup(order.subject)
            try:
                res = run_te(self.mapper, [order, found[-1]], self.r3,
                             producers=[self.pfms.producer.public_key, producer or b""],
                             sealing_key=self._route, channel=self.channels["npci-host"], context=ctx)
            except TEError as exc:
                ledger.rejected.append((k, exc.reason or exc.code))
                continue
            for out in res.envelopes:
                if out.type_id == T_DEBIT:
                    debits.append(out)
                else:
                    credits[out.type_id.name.split("/", 1)[0]].append(out)

        mapper_pk = [self.mapper.producer.public_key]
        if debits:
            res = run_te(self.sponsor, debits, self.r2, producers=mapper_pk,
                         requester=self.operators["Sponsor"], channel=self.channels["sponsor-host"])
            for row in res.sink_output:
                self.scheme_debits[row["scheme"]] -= row["amount"]
                ledger.debits.append(row)
        for bank, envs in credits.items():
            if not envs:
                continue
            res = run_te(self.bank_tes[bank], envs, self.r4[bank], producers=mapper_pk,
                         requester=self.operators[bank], channel=self.channels[f"bank:{bank}"])
            for row in res.sink_output:
                self.balances[bank][row["account"]] += row["amount"]
                ledger.credits.append({"bank": bank, **row})

        rejected = {k for k, _ in ledger.rejected}
        by_vid = {b.dbt_vid: b for b in self.beneficiaries}
        for k, e in enumerate(payment_file.entries):
            if k not in rejected and e.dbt_vid in by_vid:
                b = by_vid[e.dbt_vid]
                self.expected_credits.append((b.bank, b.bank_vid.hex(), e.amount))
        return ledger

    # driver

    def do_onboard(self, step: Step) -> str:
        self.onboard(step.int("count", self.config.int("beneficiaries", 10)),
                     step.int("unmapped", self.config.int("unmapped", 0)),
                     step.int("unapproved", self.config.int("unapproved", 0)))
        return "ok"

    def do_pay(self, step: Step) -> str:
        pf = self.payment_file()
        if step.get("tamper"):
            first = pf.entries[0]
            forged = (PaymentEntry(first.dbt_vid, first.scheme, first.amount + 1), *pf.entries[1:])
            pf = PaymentFile(forged, pf.signature)
        try:
            ledger = self.dbt_run(pf)
        except PaymentFileRejected:
            return "FILE_REJECTED"
        return "settled" if not ledger.rejected else f"partial:{len(ledger.rejected)}"

    def run(self) -> ScenarioResult:
        try:
            for step in self.config.steps:
                handler = getattr(self, "do_" + step.action.replace("-", "_"), None)
                if handler is None:
                    raise ConfigError(f"unknown dbt action {step.action!r}")
                self.result.record(step, handler(step))
            self._check_invariants()
        finally:
            self.close()
        return self.result

    # checks

    def component_blobs(self) -> dict[str, bytes]:
        """Everything each component logged or persisted, as bytes."""
        blobs = {name: ch.blob() for name, ch in self.channels.items()}
        for name, reg in self.world.regulators.items():
            decisions = repr(sorted((d.decision_id, d.verdict, d.reason, d.rule_id, sorted(d.bindings.items()))
                                    for d in reg.decisions.values())).encode()
            blobs[f"regulator:{name}"] = b"\n".join([reg.audit.dumps().encode(), repr(reg.events).encode(),
                                                    decisions])
        a = self.world.authority
        blobs["authority-logs"] = b"\n".join([repr(a.check_log).encode(), repr(a.links).encode(),
                                             a.audit.dumps().encode()])
        blobs["approver"] = json.dumps(self.approver.transcript, sort_keys=True).encode()
        blobs["npci-store-file"] = self.store_path.read_bytes() if self.store_path.exists() else b""
        for bank, accounts in self.balances.items():
            blobs[f"bank:{bank}"] += b"\n" + json.dumps(accounts, sort_keys=True).encode()
        blobs["sponsor-host"] += b"\n" + json.dumps(self.scheme_debits, sort_keys=True).encode()
        return blobs

    def cooccurrences(self) -> list[tuple[str, int]]:
        return scan_cooccurrence(self.component_blobs(),
                                 [(b.dbt_vid, b.bank_vid) for b in self.beneficiaries])

    def _check_invariants(self) -> None:
        inv = self.result.invariants
        credits = sum(l.total_credits for l in self.ledgers)
        debits = sum(l.total_debits for l in self.ledgers)
        inv["conservation"] = credits == debits
        got = sorted((c["bank"], c["account"], c["amount"]) for l in self.ledgers for c in l.credits)
        inv["credits_reach_mapped_accounts"] = got == sorted(self.expected_credits)
        inv["vid_isolation"] = not self.cooccurrences()
        inv["audit_chains_verify"] = all(r.audit.verify() for r in self.world.regulators.values())
        self.result.outputs["ledgers"] = [{"credits": l.credits, "debits": l.debits, "rejected": l.rejected}
                                          for l in self.ledgers]
        self.result.outputs["totals"] = {"credits": credits, "debits": debits}


def _forms(vid: bytes) -> list[bytes]:
    return [vid, vid.hex().encode(), vid.hex().upper().encode()]


def scan_cooccurrence(blobs: dict[str, bytes], pairs: list[tuple[bytes, bytes]]) -> list[tuple[str, int]]:
    """(component, person index) for every blob holding both of one person's vids."""
    hits = []
    for name, blob in sorted(blobs.items()):
        for i, (a, b) in enumerate(pairs):
            if any(f in blob for f in _forms(a)) and any(f in blob for f in _forms(b)):
                hits.append((name, i))
    return hits


def dbt_run(config: ScenarioConfig, seed: int, rules, manifests, workdir=None) -> ScenarioResult:
    return DBTRun(config, seed, rules, manifests, workdir).run()
