"""Hospital electronic health records.

Patients register at the desk, get an MRI, and a doctor reads a minimised
clinical summary at a terminal; an analyst sees aggregates only. Each TE
reads regulated data only after the regulator grants the key.

Script actions (``step:`` lines of the config):

``admit patient=N``, ``consent patient=N verb=V [doctor=M] [ttl=S]``,
``revoke patient=N verb=V``, ``scan patient=N [tamper=K]``,
``view patient=N doctor=M [role=R] [credential=none]``,
``relabel patient=N type=T``, ``replay``, ``advance seconds=S``,
``analyst-aggregate``, ``analyst-rows``.

Access steps report ``GRANT``, the deny reason, or ``TYPE_VIOLATION``;
predicate steps report ``stored`` or the regulator error code.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

from .. import crypto
from ..crypto import Envelope, TypeId
from ..regulator import RegulatorError, direct_approval, make_consent, revocation_message
from ..store import EncryptedStore
from ..te import Output, Requester, TEError, TEInstance, TEManifest, run_te
from .common import (
    ConfigError,
    ScenarioConfig,
    ScenarioResult,
    Step,
    World,
    require_manifests,
    tampered_copy,
)

HOSPITAL = "HospitalA"
ETHICS_BOARD = "EthicsBoard"

T_REGISTRATION = TypeId("DT1/Registration", "x")
T_SCAN_ORDER = TypeId("DT2/ScanOrder", "x")
T_DEMOGRAPHICS = TypeId("DT3/Demographics", "x")
T_RECORD = TypeId("DT4/MedicalRecord", "x")
T_SUMMARY = TypeId("DT5/ClinicalSummary", "x")
T_STATS = TypeId("Stats/DiagnosisCounts")

MANIFESTS = ("RegistrationDesk", "MRIScanner", "DoctorTerminal", "AnalyticsAggregate", "AnalyticsRows")

COMPLAINTS = ("headache", "back pain", "knee injury", "dizziness")


def _j(obj) -> bytes:
    return json.dumps(obj, sort_keys=True).encode("utf-8")


# -- TE logic (pure functions; their source is the measured code image) -------------


def registration_logic(inputs):
    out = []
    for inp in inputs:
        rec = json.loads(inp.payload)
        out.append(Output(TypeId("DT2/ScanOrder", "x"), inp.subject,
                          json.dumps({"modality": "MRI", "complaint": rec["complaint"],
                                      "age": rec["age"]}, sort_keys=True).encode()))
        out.append(Output(TypeId("DT3/Demographics", "x"), inp.subject,
                          json.dumps({"name": rec["name"], "age": rec["age"]}, sort_keys=True).encode()))
    return out


def mri_logic(inputs):
    table = {
        "headache": ("no acute abnormality", "tension headache"),
        "back pain": ("disc bulge L4-L5", "lumbar disc herniation"),
        "knee injury": ("ACL tear", "ligament injury"),
        "dizziness": ("small vessel changes", "vestibular disorder"),
    }
    out = []
    for inp in inputs:
        order = json.loads(inp.payload)
        finding, diagnosis = table.get(order["complaint"], ("inconclusive", "refer"))
        record = {"age": order["age"], "modality": order["modality"], "finding": finding,
                  "diagnosis": diagnosis, "image_ref": inp.digest.hex()[:16]}
        out.append(Output(TypeId("DT4/MedicalRecord", "x"), inp.subject,
                          json.dumps(record, sort_keys=True).encode()))
    return out


def doctor_view_logic(inputs):
    return [Output(TypeId("DT5/ClinicalSummary", "x"), inp.subject, json.loads(inp.payload))
            for inp in inputs]


def analytics_aggregate_logic(inputs):
    return [Output(TypeId("Stats/DiagnosisCounts"), b"", json.loads(inp.payload)) for inp in inputs]


def analytics_rows_logic(inputs):
    # tries to hand the analyst per-patient rows under a row-level type
    return [Output(TypeId("DT5/ClinicalSummary", "x"), inp.subject, json.loads(inp.payload))
            for inp in inputs]


LOGIC = {
    "RegistrationDesk": registration_logic,
    "MRIScanner": mri_logic,
    "DoctorTerminal": doctor_view_logic,
    "AnalyticsAggregate": analytics_aggregate_logic,
    "AnalyticsRows": analytics_rows_logic,
}


# -- the run -------------------------------------------------------------------------


@dataclass
class Patient:
    index: int
    name: str
    age: int
    complaint: str
    vid: object = None
    consents: dict[str, bytes] = field(default_factory=dict)  # verb -> nonce


class EHRRun:
    def __init__(self, config: ScenarioConfig, seed: int, rules, manifests: dict[str, TEManifest]):
        require_manifests(manifests, MANIFESTS)
        self.config = config
        self.world = w = World(seed, rsa_bits=config.int("rsa_bits", 1024))
        self.result = ScenarioResult("ehr", seed)
        self.regulator = w.regulator("R", rules)
        self.result.regulators["R"] = self.regulator
        self.consent_ttl = config.int("consent_ttl", 30 * 86400)
        self.store = EncryptedStore(w.fork("store-key").bytes(32), rng=w.fork("store"))

        self.tes: dict[str, TEInstance] = {
            name: w.deploy(manifests[name], LOGIC[name], [self.regulator],
                           risk=f"{name}: reviewed for {HOSPITAL}")
            for name in MANIFESTS
        }

        # staff credentials come from the hospital's HR issuer
        self.hr = w.issuer(f"{HOSPITAL}-HR", ["role:doctor", "role:nurse", "role:analyst"])
        self.regulator.trust_issuer(self.hr.name, self.hr.public_key)
        n_doctors = config.int("doctors", 1)
        self.doctors: list[Requester] = [w.staff(f"doctor-{i}", HOSPITAL, "doctor", self.hr)
                                         for i in range(n_doctors)]
        self.nurse = w.staff("nurse-0", HOSPITAL, "nurse", self.hr)
        self.analyst = w.staff("analyst-0", HOSPITAL, "analyst", self.hr)
        board = crypto.generate_keypair(w.fork("ethics-board"))
        self.regulator.trust_approver(ETHICS_BOARD, board.public_key)
        self.regulator.record_approval(direct_approval(ETHICS_BOARD, board, self.analyst.vid,
                                                       "approved-analyst"))

        rng = w.fork("patients")
        self.patients = []
        for i in range(config.int("patients", 3)):
            complaint = COMPLAINTS[crypto.randbelow(rng, len(COMPLAINTS))]
            self.patients.append(Patient(i, f"Patient Name {i:03d}", 20 + crypto.randbelow(rng, 60),
                                         complaint))
        self.sink_outputs: dict[str, list] = {}
        self._last_request: bytes | None = None

    # helpers

    def patient(self, step: Step) -> Patient:
        i = step.int("patient")
        if not 0 <= i < len(self.patients):
            raise ConfigError(f"no patient {i}")
        p = self.patients[i]
        if p.vid is None:
            person = self.world.person(f"patient-{i}")
            p.vid = person.register(HOSPITAL)
        return p

    def doctor(self, step: Step) -> Requester:
        i = step.int("doctor", 0)
        if not 0 <= i < len(self.doctors):
            raise ConfigError(f"no doctor {i}")
        return self.doctors[i]

    def _producers(self) -> list[bytes]:
        keys = [te.producer.public_key for te in self.tes.values()]
        for p in self.patients:
            if p.vid is not None:
                keys.append(self.world.person(f"patient-{p.index}").keypair(p.vid).public_key)
        return keys

    def _run(self, te: TEInstance, inputs: list[Envelope], requester: Requester | None = None):
        channel = self.world.channel
        mark = len(channel.records)
        try:
            res = run_te(te, inputs, self.regulator, producers=self._producers(),
                         sealing_key=self.regulator.public_key, requester=requester, channel=channel)
        except TEError as exc:
            return None, exc.reason if exc.code == TEError.ACCESS_DENIED else exc.code
        finally:
            for _, kind, data in channel.records[mark:]:
                if kind == "access-request":
                    self._last_request = data
        return res, "GRANT"

    def _latest(self, p: Patient, type_id: TypeId) -> Envelope | None:
        found = self.store.get_by_token(self.store.token(p.vid.value, type_id))
        return found[-1] if found else None

    # actions

    def do_admit(self, step: Step) -> str:
        p = self.patient(step)
        person = self.world.person(f"patient-{p.index}")
        env = crypto.seal(T_REGISTRATION, p.vid, _j({"name": p.name, "age": p.age,
                                                      "complaint": p.complaint}),
                          self.regulator.public_key, person.keypair(p.vid), self.world.fork(f"intake:{p.index}"))
        self.world.channel.send("patient-device", "upload", env.to_bytes())
        res, outcome = self._run(self.tes["RegistrationDesk"], [env])
        if res is not None:
            for out in res.envelopes:
                self.store.put(out)
        return outcome

    def do_consent(self, step: Step) -> str:
        p = self.patient(step)
        verb = step.get("verb")
        if verb is None:
            raise ConfigError("consent needs verb=")
        obj = self.doctor(step).vid.hex() if "doctor" in step.args else step.get("object", HOSPITAL)
        scope = {"registered": ["DT1/*"], "imaging": ["DT2/*"], "consulted": ["DT4/*"]}.get(verb, ["*"])
        ttl = step.int("ttl", self.consent_ttl)
        person = self.world.person(f"patient-{p.index}")
        pred = make_consent(person, p.vid, verb, obj, scope, self.world.clock() + ttl,
                            self.world.fork(f"consent:{p.index}:{verb}:{len(p.consents)}"))
        try:
            outcome = self.regulator.record_consent(pred)
        except RegulatorError as exc:
            return exc.code
        p.consents[verb] = pred.nonce
        return outcome

    def do_revoke(self, step: Step) -> str:
        p = self.patient(step)
        nonce = p.consents.pop(step.get("verb", ""), None)
        if nonce is None:
            raise ConfigError("revoke of a consent never given")
        person = self.world.person(f"patient-{p.index}")
        try:
            self.regulator.revoke_consent(nonce, person.sign_as(p.vid, revocation_message(nonce)))
        except RegulatorError as exc:
            return exc.code
        return "revoked"

    def do_scan(self, step: Step) -> str:
        p = self.patient(step)
        order = self._latest(p, T_SCAN_ORDER)
        if order is None:
            return "NO_DATA"
        te = self.tes["MRIScanner"]
        if "tamper" in step.args:
            te = tampered_copy(te, step.int("tamper"))
        res, outcome = self._run(te, [order])
        if res is not None:
            for out in res.envelopes:
                self.store.put(out)
        return outcome

    def _view(self, p: Patient, requester: Requester | None, env: Envelope | None = None) -> str:
        env = env or self._latest(p, T_RECORD)
        if env is None:
            return "NO_DATA"
        res, outcome = self._run(self.tes["DoctorTerminal"], [env], requester)
        if res is not None:
            self.sink_outputs.setdefault("doctor", []).extend(res.sink_output)
        return outcome

    def do_view(self, step: Step) -> str:
        p = self.patient(step)
        if step.get("credential") == "none":
            d = self.doctor(step)
            requester = Requester(d.vid, d.keypair, b"")
        elif step.get("role") == "nurse":
            requester = self.nurse
        else:
            requester = self.doctor(step)
        return self._view(p, requester)

    def do_relabel(self, step: Step) -> str:
        """The host presents a DT4 envelope under a different DT4 type name."""
        p = self.patient(step)
        env = self._latest(p, T_RECORD)
        if env is None:
            return "NO_DATA"
        forged = Envelope(TypeId.parse(step.get("type", "DT4/LabResult(x)")), env.subject,
                          env.wrapped_key, env.nonce, env.ciphertext, env.producer_sig)
        return self._view(p, self.doctor(step), forged)

    def do_replay(self, step: Step) -> str:
        """Resend the last access request verbatim."""
        if self._last_request is None:
            return "NO_DATA"
        from ..protocol import AccessDecision

        decision = AccessDecision.from_bytes(self.regulator.handle(self._last_request))
        return decision.verdict if decision.granted else decision.reason

    def do_advance(self, step: Step) -> str:
        self.world.clock.advance(step.int("seconds"))
        return "ok"

    def _records(self) -> list[Envelope]:
        out = []
        for p in self.patients:
            if p.vid is not None:
                env = self._latest(p, T_RECORD)
                if env is not None:
                    out.append(env)
        return out

    def do_analyst_aggregate(self, step: Step) -> str:
        records = self._records()
        if not records:
            return "NO_DATA"
        res, outcome = self._run(self.tes["AnalyticsAggregate"], records, self.analyst)
        if res is not None:
            self.sink_outputs.setdefault("analyst", []).extend(res.sink_output)
        return outcome

    def do_analyst_rows(self, step: Step) -> str:
        records = self._records()
        if not records:
            return "NO_DATA"
        res, outcome = self._run(self.tes["AnalyticsRows"], records, self.analyst)
        if res is not None:
            self.sink_outputs.setdefault("analyst-rows", []).extend(res.sink_output)
        return outcome

    # driver

    def run(self) -> ScenarioResult:
        for step in self.config.steps:
            handler = getattr(self, "do_" + step.action.replace("-", "_"), None)
            if handler is None:
                raise ConfigError(f"unknown ehr action {step.action!r}")
            self.result.record(step, handler(step))
        self._check_invariants()
        self.result.outputs.update({f"sink:{k}": v for k, v in sorted(self.sink_outputs.items())})
        return self.result

    def _check_invariants(self) -> None:
        inv = self.result.invariants
        reg = self.regulator
        inv["audit_chain_verifies"] = reg.audit.verify()
        grants = sum(1 for d in reg.decisions.values() if d.verdict == "GRANT")
        released = sum(1 for d in reg.decisions.values() if d.key_released)
        provisioned = sum(1 for e, _ in reg.events if e == "key_provisioned")
        inv["keys_only_on_grant"] = grants == released == provisioned
        blob = self.world.channel.blob()
        inv["no_plaintext_names_on_channels"] = not any(p.name.encode() in blob for p in self.patients)
        allowed = set(self.tes["DoctorTerminal"].manifest.minimisation_policy.allowed_fields)
        inv["doctor_output_minimised"] = all(set(r) <= allowed for r in self.sink_outputs.get("doctor", []))
        agg_fields = set(self.tes["AnalyticsAggregate"].manifest.minimisation_policy.allowed_fields)
        inv["analyst_output_aggregate_only"] = all(
            set(r) <= agg_fields and all(isinstance(v, dict) for v in r.values())
            for r in self.sink_outputs.get("analyst", []))


def ehr_run(config: ScenarioConfig, seed: int, rules, manifests) -> ScenarioResult:
    return EHRRun(config, seed, rules, manifests).run()
