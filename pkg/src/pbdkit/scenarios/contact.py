"""Contact tracing with regulator-gated server TEs.

Phones sample GPS every few minutes and swap encrypted, signed tokens with
devices in BLE range; the receiver wraps each token in a signed receipt.
Uploads go to an ingest TE that checks every signature against the identity
authority's directory and stores one sealed trajectory per upload. A trace
TE answers a doctor-certified infection report, and a notifier sink sends
template-only messages to the contacts' registered phones.

Script actions: ``collect [withhold=K]``, ``trace infected=N [forge=1]``,
``attacks``.
"""

from __future__ import annotations

import functools
import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .. import crypto
from ..crypto import Envelope, TypeId
from ..framing import FramingError, from_i64, i64, pack_fields, unpack_fields
from ..identity import Credential
from ..store import EncryptedStore
from ..te import ChannelLog, ExecutionContext, Output, TEError, TEInstance, code_image_of, run_te
from ..tracekernel import TraceRecords, grid_contacts
from .common import ConfigError, ScenarioConfig, ScenarioResult, Step, World, require_manifests

SAMPLE_PERIOD_S = 300
UPLOAD_PERIOD_S = 4 * 3600
APP_ORG = "CT-App"
GPS, BLE = "GPS", "BLE"

T_TOKEN = TypeId("CT/Token")
T_RECEIPT = TypeId("CT/Receipt", "x")
T_BATCH = TypeId("CT/LocationBatch", "x")
T_TRAJECTORY = TypeId("CT/Trajectory", "x")
T_REGISTRATION = TypeId("CT/Registration", "x")
T_REPORT = TypeId("CT/InfectionReport", "x")
T_CONTACTS = TypeId("CT/Contacts")

MANIFESTS = ("CTIngest", "CTTrace", "CTNotifier")

DEFAULT_TEMPLATE = ("You were recently near someone who has since tested positive. "
                    "Please get tested and limit contact with others for a few days.")

_POINT = struct.Struct(">ddq")
_RECORD = struct.Struct(">ddqB")


class TraceError(Exception):
    BAD_DOCTOR_SIGNATURE = "BAD_DOCTOR_SIGNATURE"
    DEGENERATE_PARAMS = "DEGENERATE_PARAMS"

    def __init__(self, code: str, detail: str = ""):
        super().__init__(f"{code}: {detail}" if detail else code)
        self.code = code


class IngestRejected(ValueError):
    pass


# -- records and trajectories --------------------------------------------------------


@dataclass(frozen=True)
class ContactRecord:
    vid: bytes
    x: float
    y: float
    time: int
    origin: str = GPS


def random_walk(n_agents: int, n_periods: int, seed: int, area_m: float = 1000.0,
                step_m: float = 25.0, period_s: int = SAMPLE_PERIOD_S,
                start: int = 1_700_000_000) -> np.ndarray:
    """Rows of (agent index, t, x, y), one per agent per period."""
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, area_m, size=(n_agents, 2))
    rows = []
    for k in range(n_periods):
        if k:
            pos = pos + rng.normal(0.0, step_m, size=pos.shape)
            pos = np.abs(pos)  # reflect at the walls
            pos = area_m - np.abs(area_m - pos)
        t = start + k * period_s
        for i in range(n_agents):
            rows.append((i, t, pos[i, 0], pos[i, 1]))
    return np.array(rows, dtype=np.float64)


def format_trajectories(rows: np.ndarray) -> str:
    return "".join(f"{int(a)} {int(t)} {float(x)!r} {float(y)!r}\n" for a, t, x, y in rows)


def parse_trajectories(text: str) -> np.ndarray:
    rows = []
    for n, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"line {n}: expected 'vid_index t x y'")
        rows.append((int(parts[0]), int(parts[1]), float(parts[2]), float(parts[3])))
    return np.array(rows, dtype=np.float64).reshape(-1, 4)


def ble_pairs(xs: Sequence[float], ys: Sequence[float], range_m: float) -> list[tuple[int, int]]:
    """Index pairs (i < j) within ``range_m``, found through a grid of range-sized cells."""
    if range_m <= 0:
        raise ValueError("BLE range must be positive")
    cells: dict[tuple[int, int], list[int]] = {}
    for i, (x, y) in enumerate(zip(xs, ys)):
        cells.setdefault((math.floor(x / range_m), math.floor(y / range_m)), []).append(i)
    r2 = range_m * range_m
    pairs = []
    for (cx, cy), members in cells.items():
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for j in cells.get((cx + dx, cy + dy), ()):
                    for i in members:
                        if i < j:
                            ddx, ddy = xs[i] - xs[j], ys[i] - ys[j]
                            if ddx * ddx + ddy * ddy <= r2:
                                pairs.append((i, j))
    return sorted(pairs)


# -- signed device messages ----------------------------------------------------------


def token_message(vid: bytes, x: float, y: float, t: int) -> bytes:
    return pack_fields([b"ct-token", vid, _POINT.pack(x, y, t)])


def receipt_message(receiver: bytes, token_bytes: bytes) -> bytes:
    return pack_fields([b"ct-receipt", receiver, token_bytes])


def batch_message(vid: bytes, points: bytes) -> bytes:
    return pack_fields([b"ct-batch", vid, points])


def report_message(vid_a: bytes, report: str, diagnosed_at: int) -> bytes:
    return pack_fields([b"infection-report", vid_a, report.encode(), i64(diagnosed_at)])


def encode_records(records: Iterable[tuple[float, float, int, str]]) -> bytes:
    return b"".join(_RECORD.pack(x, y, t, 1 if o == BLE else 0) for x, y, t, o in records)


def decode_records(vid: bytes, blob: bytes) -> list[ContactRecord]:
    return [ContactRecord(vid, x, y, t, BLE if o else GPS)
            for x, y, t, o in _RECORD.iter_unpack(blob)]


@dataclass(frozen=True)
class InfectionReport:
    vid_a: bytes
    report: str
    diagnosed_at: int
    doctor_vid: bytes
    doctor_public_key: bytes
    doctor_credential: bytes
    signature: bytes

    def to_bytes(self) -> bytes:
        return pack_fields([self.vid_a, self.report.encode(), i64(self.diagnosed_at), self.doctor_vid,
                            self.doctor_public_key, self.doctor_credential, self.signature])

    @classmethod
    def from_bytes(cls, data: bytes) -> "InfectionReport":
        a, r, d, dv, dpk, cred, sig = unpack_fields(data)
        return cls(a, r.decode(), from_i64(d), dv, dpk, cred, sig)


@dataclass(frozen=True)
class TraceQueryParams:
    """Euclidean distance in metres, absolute time difference in seconds."""

    epsilon: float
    delta: float
    window: float
    time_now: float

    def check(self) -> None:
        if not (self.epsilon >= 0 and self.delta >= 0 and self.window > 0):
            raise TraceError(TraceError.DEGENERATE_PARAMS,
                             f"epsilon={self.epsilon} delta={self.delta} window={self.window}")


def verify_report(report: InfectionReport, authenticate: Callable[[bytes, bytes], bool],
                  doctor_issuer: str, issuer_key: crypto.BlindPublicKey) -> None:
    """Raise BAD_DOCTOR_SIGNATURE unless a credentialed, authenticated doctor signed it."""
    try:
        cred = Credential.from_bytes(report.doctor_credential)
        ok = (cred.issuer == doctor_issuer and cred.attribute == "role:doctor"
              and cred.subject_vid == report.doctor_vid and cred.verify(issuer_key)
              and authenticate(report.doctor_vid, report.doctor_public_key)
              and crypto.verify(report.doctor_public_key,
                                report_message(report.vid_a, report.report, report.diagnosed_at),
                                report.signature))
    except (FramingError, UnicodeDecodeError, crypto.MalformedKeyError):
        ok = False
    if not ok:
        raise TraceError(TraceError.BAD_DOCTOR_SIGNATURE)


def records_to_arrays(records: Sequence[ContactRecord]) -> tuple[TraceRecords, list[bytes]]:
    vids = sorted({r.vid for r in records})
    index = {v: i for i, v in enumerate(vids)}
    tr = TraceRecords([index[r.vid] for r in records], [r.x for r in records],
                      [r.y for r in records], [r.time for r in records])
    return tr, vids


def trace_contacts(vid_a: bytes, params: TraceQueryParams, records: Sequence[ContactRecord],
                   backend: str | None = None) -> set[bytes]:
    """Every vid other than ``vid_a`` within (epsilon, delta) of one of A's in-window records."""
    params.check()
    tr, vids = records_to_arrays(records)
    if vid_a not in vids:
        return set()
    hits = grid_contacts(tr, vids.index(vid_a), params.epsilon, params.delta,
                         params.time_now - params.window, params.time_now, backend)
    return {vids[int(i)] for i in hits}


def ct_trace(report: InfectionReport, params: TraceQueryParams, records: Sequence[ContactRecord], *,
             authenticate: Callable[[bytes, bytes], bool], doctor_issuer: str,
             issuer_key: crypto.BlindPublicKey, backend: str | None = None) -> set[bytes]:
    verify_report(report, authenticate, doctor_issuer, issuer_key)
    return trace_contacts(report.vid_a, params, records, backend)


def ct_notify(contacts: Iterable[bytes], phone_registry: dict[bytes, str], template: str) -> list[dict]:
    """One template-only message per contact with a registered phone."""
    return sorted(({"to": phone_registry[v], "text": template} for v in set(contacts) if v in phone_registry),
                  key=lambda n: n["to"])


# -- TE logic ----------------------------------------------------------------------


def ingest_logic(inputs, authenticate):
    batch, rest = inputs[0], inputs[1:]
    vid, pk, points, sig = unpack_fields(batch.payload)
    if vid != batch.subject or not authenticate(vid, pk) \
            or not crypto.verify(pk, batch_message(vid, points), sig):
        raise IngestRejected("location batch not signed by its vid")
    records = [(x, y, t, GPS) for x, y, t in _POINT.iter_unpack(points)]
    if len(rest) % 2:
        raise IngestRejected("receipt without its token")
    for receipt, token in zip(rest[::2], rest[1::2]):
        rv, rpk, token_bytes, rsig = unpack_fields(receipt.payload)
        if rv != vid or rpk != pk or receipt.subject != vid \
                or not crypto.verify(pk, receipt_message(rv, token_bytes), rsig) \
                or crypto.hash(token_bytes) != token.digest:
            raise IngestRejected("receipt not signed by the uploader")
        tv, tpk, point, tsig = unpack_fields(token.payload)
        x, y, t = _POINT.unpack(point)
        if tv == vid or not authenticate(tv, tpk) or not crypto.verify(tpk, token_message(tv, x, y, t), tsig):
            raise IngestRejected("token not signed by its vid")
        # the receiver is recorded at the sender's location and time
        records.append((x, y, t, BLE))
    return [Output(TypeId("CT/Trajectory", "x"), vid, encode_records(records))]


def trace_logic(inputs, authenticate, doctor_issuer, issuer_key, epsilon, delta, window):
    report = InfectionReport.from_bytes(inputs[0].payload)
    if report.vid_a != inputs[0].subject:
        raise TraceError(TraceError.BAD_DOCTOR_SIGNATURE, "report subject mismatch")
    params = TraceQueryParams(epsilon, delta, window, report.diagnosed_at)
    records = []
    for inp in inputs[1:]:
        records.extend(decode_records(inp.subject, inp.payload))
    contacts = ct_trace(report, params, records, authenticate=authenticate,
                        doctor_issuer=doctor_issuer, issuer_key=issuer_key)
    return [Output(TypeId("CT/Contacts"), b"", pack_fields(sorted(contacts)))]


def notify_logic(inputs, template):
    contacts, registry = set(), {}
    for inp in inputs:
        if inp.type_id.name == "CT/Contacts":
            contacts.update(unpack_fields(inp.payload))
        else:
            registry[inp.subject] = json.loads(inp.payload)["phone"]
    return [Output(TypeId("CT/Notification"), b"", n) for n in ct_notify(contacts, registry, template)]


# -- devices -------------------------------------------------------------------------


@dataclass
class Device:
    index: int
    vid: bytes
    keypair: crypto.KeyPair
    producer: crypto.KeyPair
    rng: crypto.RandomSource
    points: list[tuple[float, float, int]] = field(default_factory=list)
    receipts: list[tuple[Envelope, Envelope]] = field(default_factory=list)
    uploaded: list[ContactRecord] = field(default_factory=list)
    pending: list[ContactRecord] = field(default_factory=list)

    def sign(self, message: bytes) -> bytes:
        return crypto.sign(self.keypair.private_key, message)

    def record_gps(self, x: float, y: float, t: int) -> None:
        self.points.append((x, y, t))
        self.pending.append(ContactRecord(self.vid, x, y, t, GPS))

    def token(self, x: float, y: float, t: int, regulator_pk: bytes) -> Envelope:
        payload = pack_fields([self.vid, self.keypair.public_key, _POINT.pack(x, y, t),
                               self.sign(token_message(self.vid, x, y, t))])
        return crypto.seal(T_TOKEN, None, payload, regulator_pk, self.producer, self.rng)

    def receive(self, token: Envelope, x: float, y: float, t: int, regulator_pk: bytes) -> None:
        tb = token.to_bytes()
        payload = pack_fields([self.vid, self.keypair.public_key, tb, self.sign(receipt_message(self.vid, tb))])
        self.receipts.append((crypto.seal(T_RECEIPT, self.vid, payload, regulator_pk, self.producer, self.rng),
                              token))
        self.pending.append(ContactRecord(self.vid, x, y, t, BLE))

    def upload_bundle(self, regulator_pk: bytes) -> list[Envelope]:
        points = b"".join(_POINT.pack(x, y, t) for x, y, t in self.points)
        payload = pack_fields([self.vid, self.keypair.public_key, points,
                               self.sign(batch_message(self.vid, points))])
        bundle = [crypto.seal(T_BATCH, self.vid, payload, regulator_pk, self.producer, self.rng)]
        for receipt, token in self.receipts:
            bundle.extend([receipt, token])
        return bundle

    def clear(self, uploaded: bool) -> None:
        if uploaded:
            self.uploaded.extend(self.pending)
        self.points, self.receipts, self.pending = [], [], []


@dataclass
class CollectResult:
    records: list[ContactRecord]
    receipts: set[tuple[int, int, int]]  # (receiver, sender, t)
    flagged: dict[int, str]
    uploads: int


class ContactTracingRun:
    def __init__(self, config: ScenarioConfig, seed: int, rules, manifests):
        require_manifests(manifests, MANIFESTS)
        self.config = config
        self.world = w = World(seed, rsa_bits=config.int("rsa_bits", 1024))
        self.result = ScenarioResult("contact-tracing", seed)
        self.regulator = w.regulator("R", rules)
        self.result.regulators["R"] = self.regulator
        self.params = dict(epsilon=config.float("epsilon", 10.0), delta=config.float("delta", 300.0),
                           window=config.float("window", 14 * 86400))
        self.template = config.params.get("template", DEFAULT_TEMPLATE)

        self.medical_council = w.issuer("MedicalCouncil", ["role:doctor"])
        health = w.issuer("HealthDept", ["role:officer"])
        for iss in (self.medical_council, health):
            self.regulator.trust_issuer(iss.name, iss.public_key)
        self.doctor = w.staff("doctor-0", "Clinic", "doctor", self.medical_council)
        self.officer = w.staff("officer-0", "HealthDept", "officer", health)

        auth = w.authority.authenticate
        doctor_key = self.medical_council.public_key("role:doctor")
        self.ingest = w.deploy(manifests["CTIngest"], functools.partial(ingest_logic, authenticate=auth),
                               [self.regulator], code_image=code_image_of(ingest_logic),
                               risk="stores signed coordinates only")
        trace_fn = functools.partial(trace_logic, authenticate=auth, doctor_issuer=self.medical_council.name,
                                     issuer_key=doctor_key, **self.params)
        trace_image = code_image_of(trace_logic) + json.dumps(
            {**self.params, "issuer_key": doctor_key.to_bytes().hex()}, sort_keys=True).encode()
        self.trace = w.deploy(manifests["CTTrace"], trace_fn, [self.regulator], code_image=trace_image,
                              risk="contacts leave only sealed to the notifier")
        notify_image = code_image_of(notify_logic) + self.template.encode()
        self.notifier = w.deploy(manifests["CTNotifier"], functools.partial(notify_logic, template=self.template),
                                 [self.regulator], code_image=notify_image, risk="template-only messages")

        # every attested copy of the phone app signs envelopes with the app's key;
        # who the record is about is carried by the vid signature inside
        self.app_key = crypto.generate_keypair(w.fork("app-producer"))
        self.server = ChannelLog()
        self.store = EncryptedStore(w.fork("server-index").bytes(32), rng=w.fork("server-store"))
        self.devices: list[Device] = []
        self.phones: dict[int, str] = {}
        self.flagged: dict[int, str] = {}
        self.notifications: list[dict] = []
        self.traces: list[tuple[bytes, set[bytes]]] = []
        self.collected: CollectResult | None = None

    # registration

    def register_agents(self, n: int) -> None:
        w = self.world
        phone_rng = w.fork("phones")
        for i in range(len(self.devices), n):
            person = w.person(f"agent-{i}")
            vid = person.register(APP_ORG)
            dev = Device(i, vid.value, person.keypair(vid), self.app_key, w.fork(f"device:{i}"))
            phone = "+91 98" + "".join(str(crypto.randbelow(phone_rng, 10)) for _ in range(8))
            self.phones[i] = phone
            env = crypto.seal(T_REGISTRATION, dev.vid, json.dumps({"phone": phone}).encode(),
                              self.regulator.public_key, dev.producer, dev.rng)
            self.server.send("server", "registration", env.to_bytes())
            self.store.put(env)
            self.devices.append(dev)

    def _device_producers(self) -> list[bytes]:
        return [self.app_key.public_key]

    # collection

    def ct_collect(self, trajectories: np.ndarray, ble_range_m: float = 10.0,
                   sample_period_s: int = SAMPLE_PERIOD_S, upload_period_s: int = UPLOAD_PERIOD_S,
                   withhold: Iterable[int] = (), forgers: Iterable[int] = ()) -> CollectResult:
        """Sample, exchange tokens, and upload in batches; returns what reached the server."""
        if sample_period_s <= 0 or upload_period_s <= 0:
            raise ValueError("periods must be positive")
        n_agents = int(trajectories[:, 0].max()) + 1 if len(trajectories) else 0
        self.register_agents(n_agents)
        withhold, forgers = set(withhold), set(forgers)
        rpk = self.regulator.public_key
        times = np.unique(trajectories[:, 1]).astype(np.int64)
        t0 = int(times[0]) if len(times) else 0
        receipts: set[tuple[int, int, int]] = set()
        uploads = 0
        next_upload = t0 + upload_period_s
        for t in times:
            t = int(t)
            if (t - t0) % sample_period_s:
                continue
            while t >= next_upload:
                uploads += self._upload_all(next_upload, withhold, forgers)
                next_upload += upload_period_s
            self.world.clock.now = max(self.world.clock.now, t)
            rows = trajectories[trajectories[:, 1] == t]
            idx = rows[:, 0].astype(np.int64)
            xs, ys = rows[:, 2].tolist(), rows[:, 3].tolist()
            for k, i in enumerate(idx):
                self.devices[i].record_gps(xs[k], ys[k], t)
            tokens: dict[int, Envelope] = {}
            for a, b in ble_pairs(xs, ys, ble_range_m):
                for s, r in ((a, b), (b, a)):
                    sender, receiver = int(idx[s]), int(idx[r])
                    if s not in tokens:
                        tokens[s] = self.devices[sender].token(xs[s], ys[s], t, rpk)
                    self.devices[receiver].receive(tokens[s], xs[s], ys[s], t, rpk)
                    receipts.add((receiver, sender, t))
        uploads += self._upload_all(next_upload, withhold, forgers)
        self.world.clock.now = max(self.world.clock.now, next_upload)
        records = [r for d in self.devices for r in d.uploaded]
        self.collected = CollectResult(records, receipts, dict(self.flagged), uploads)
        return self.collected

    def _upload_all(self, at: int, withhold: set[int], forgers: set[int]) -> int:
        done = 0
        for dev in self.devices:
            if dev.index in withhold:
                # the phone skipped its scheduled upload; the server expected one
                self.flagged.setdefault(dev.index, "missing-upload")
                dev.clear(uploaded=False)
                continue
            bundle = dev.upload_bundle(self.regulator.public_key)
            if dev.index in forgers:
                bundle = self._forge(dev)
            ok = self.ingest_upload(bundle)
            if not ok:
                self.flagged.setdefault(dev.index, "invalid-upload")
            dev.clear(uploaded=ok)
            done += ok
        return done

    def _forge(self, dev: Device) -> list[Envelope]:
        """Attach a receipt for a token claiming another agent's vid, signed with ``dev``'s key."""
        victim = self.devices[(dev.index + 1) % len(self.devices)]
        x, y, t = dev.points[-1] if dev.points else (0.0, 0.0, self.world.clock())
        payload = pack_fields([victim.vid, dev.keypair.public_key, _POINT.pack(x, y, t),
                               dev.sign(token_message(victim.vid, x, y, t))])
        token = crypto.seal(T_TOKEN, None, payload, self.regulator.public_key, dev.producer, dev.rng)
        dev.receive(token, x, y, t, self.regulator.public_key)
        return dev.upload_bundle(self.regulator.public_key)

    def ingest_upload(self, bundle: list[Envelope]) -> bool:
        for env in bundle:
            self.server.send("server", "upload", env.to_bytes())
        try:
            res = run_te(self.ingest, bundle, self.regulator, producers=self._device_producers(),
                         sealing_key=self.regulator.public_key, channel=self.server)
        except (TEError, ValueError, struct.error):
            # IngestRejected, framing and key errors are all ValueErrors
            return False
        for env in res.envelopes:
            self.store.put(env)
        return True

    # tracing and notification

    def infection_report(self, infected: int, forge: bool = False) -> Envelope:
        dev = self.devices[infected]
        now = self.world.clock()
        text = "confirmed positive"
        kp = self.doctor.keypair
        if forge:
            # someone without the doctor's key tries to push a person into quarantine
            kp = crypto.generate_keypair(self.world.fork(f"forger:{infected}"))
        sig = crypto.sign(kp.private_key, report_message(dev.vid, text, now))
        report = InfectionReport(dev.vid, text, now, self.doctor.vid, self.doctor.keypair.public_key,
                                 self.doctor.credential, sig)
        return crypto.seal(T_REPORT, dev.vid, report.to_bytes(), self.regulator.public_key,
                           self.doctor.keypair, self.world.fork(f"report:{infected}:{len(self.traces)}"))

    def trajectories_for_trace(self, ctx: ExecutionContext) -> list[Envelope]:
        out = []
        for dev in self.devices:
            out.extend(self.store.get(dev.vid, T_TRAJECTORY, ctx))
        return out

    def run_trace(self, infected: int, forge: bool = False) -> tuple[str, set[bytes]]:
        report = self.infection_report(infected, forge)
        self.server.send("doctor", "report", report.to_bytes())
        ctx = ExecutionContext(self.trace)
        inputs = [report, *self.trajectories_for_trace(ctx)]
        try:
            res = run_te(self.trace, inputs, self.regulator,
                         producers=[self.doctor.keypair.public_key, self.ingest.producer.public_key],
                         sealing_key=self.regulator.public_key, channel=self.server, context=ctx)
        except TraceError as exc:
            return exc.code, set()
        except TEError as exc:
            return exc.reason or exc.code, set()
        contacts_env = res.envelopes[0]

        ctx = ExecutionContext(self.notifier)
        regs = [e for dev in self.devices for e in self.store.get(dev.vid, T_REGISTRATION, ctx)]
        try:
            out = run_te(self.notifier, [contacts_env, *regs], self.regulator,
                         producers=[self.trace.producer.public_key, *self._device_producers()],
                         requester=self.officer, channel=self.server, context=ctx)
        except TEError as exc:
            return exc.reason or exc.code, set()
        self.notifications.extend(out.sink_output)
        by_phone = {self.phones[d.index]: d.vid for d in self.devices}
        notified = {by_phone[n["to"]] for n in out.sink_output}
        self.traces.append((self.devices[infected].vid, notified))
        return "GRANT", notified

    def expected_contacts(self, infected: int) -> set[bytes]:
        """What the trace should find, computed from the device-side uploaded records."""
        assert self.collected is not None
        params = TraceQueryParams(time_now=self.world.clock(), **self.params)
        return trace_contacts(self.devices[infected].vid, params, self.collected.records)

    # script driver

    def trajectories_from_config(self) -> np.ndarray:
        path = self.config.params.get("trajectories")
        if path:
            try:
                with open(path, encoding="utf-8") as fh:
                    return parse_trajectories(fh.read())
            except (OSError, ValueError) as exc:
                raise ConfigError(f"trajectories: {exc}") from exc
        seed = int.from_bytes(self.world.fork("walk").bytes(8), "big")
        return random_walk(self.config.int("agents", 50), self.config.int("periods", 48), seed,
                           area_m=self.config.float("area_m", 500.0), step_m=self.config.float("step_m", 25.0),
                           period_s=self.config.int("sample_period_s", SAMPLE_PERIOD_S),
                           start=self.world.clock())

    def do_collect(self, step: Step) -> str:
        withhold = range(step.int("withhold", 0))
        forgers = range(len(withhold), len(withhold) + step.int("forgers", 0))
        res = self.ct_collect(self.trajectories_from_config(), self.config.float("ble_range_m", 10.0),
                              self.config.int("sample_period_s", SAMPLE_PERIOD_S),
                              self.config.int("upload_period_s", UPLOAD_PERIOD_S), withhold, forgers)
        self.result.outputs["receipts"] = sorted(res.receipts)
        return f"flagged:{len(res.flagged)}" if res.flagged else "ok"

    def do_trace(self, step: Step) -> str:
        infected = step.int("infected")
        if not 0 <= infected < len(self.devices):
            raise ConfigError(f"no agent {infected}")
        outcome, notified = self.run_trace(infected, forge=bool(step.get("forge")))
        if outcome == "GRANT":
            ok = notified == self.expected_contacts(infected) - {self.devices[infected].vid}
            self.result.invariants["trace_matches_oracle"] = \
                self.result.invariants.get("trace_matches_oracle", True) and ok
        return outcome

    def do_attacks(self, step: Step) -> str:
        matrix = attack_matrix(self)
        self.result.outputs["attack_matrix"] = matrix
        failed = [k for k, v in matrix.items() if not v["defended"]]
        return "ok" if not failed else "failed:" + ",".join(failed)

    def run(self) -> ScenarioResult:
        for step in self.config.steps:
            handler = getattr(self, "do_" + step.action.replace("-", "_"), None)
            if handler is None:
                raise ConfigError(f"unknown contact-tracing action {step.action!r}")
            self.result.record(step, handler(step))
        self._check_invariants()
        return self.result

    def _check_invariants(self) -> None:
        inv = self.result.invariants
        inv["audit_chain_verifies"] = self.regulator.audit.verify()
        inv["notifications_template_only"] = notifications_clean(self)
        self.result.outputs["notifications"] = self.notifications
        self.result.outputs["flagged"] = sorted(self.flagged.items())


def notifications_clean(run: ContactTracingRun) -> bool:
    """No infected vid, coordinate or timestamp appears in any notification payload."""
    blob = json.dumps(run.notifications, sort_keys=True).encode()
    for vid_a, _ in run.traces:
        if vid_a in blob or vid_a.hex().encode() in blob:
            return False
        for dev in run.devices:
            if dev.vid != vid_a:
                continue
            for r in dev.uploaded:
                for s in (str(int(r.time)), f"{r.x:.1f}", f"{r.y:.1f}"):
                    if s.encode() in blob:
                        return False
    return all(set(n) == {"to", "text"} and n["text"] == run.template for n in run.notifications)


# -- attack matrix -------------------------------------------------------------------


def _attempt(run: ContactTracingRun, te: TEInstance, inputs: list[Envelope], requester=None) -> str:
    try:
        run_te(te, inputs, run.regulator, producers=[run.app_key.public_key, run.ingest.producer.public_key],
               sealing_key=run.regulator.public_key,
               requester=requester, channel=ChannelLog())
    except TEError as exc:
        return exc.reason if exc.code == TEError.ACCESS_DENIED else exc.code
    return "GRANT"


def _dump_logic(inputs):
    return [Output(TypeId("CT/Contacts"), b"", inp.payload) for inp in inputs]


def attack_matrix(run: ContactTracingRun) -> dict[str, dict]:
    """Run one scripted adversary per attack and report whether its defense fired."""
    if run.collected is None or len(run.devices) < 3:
        raise ConfigError("attacks need a completed collection with at least 3 agents")
    w = run.world
    out: dict[str, dict] = {}
    a, b = run.devices[0], run.devices[1]
    token = a.token(1.0, 2.0, w.clock(), run.regulator.public_key)

    # 1: a phone that received a token tries to read who sent it
    try:
        crypto.open_envelope(token, w.fork("guess").bytes(32), a.producer.public_key)
        opened = "opened"
    except crypto.EnvelopeError as exc:
        opened = exc.code
    reader = w.deploy(run.ingest.manifest, _dump_logic, code_image=b"token reader")
    via_te = _attempt(run, reader, [token])
    out["1-learn-others-status"] = {"defended": opened == "KEY_MISMATCH" and via_te == "TE_UNKNOWN",
                                    "detail": f"direct={opened} via_te={via_te}"}

    # 2: a server insider runs a modified trace that dumps contacts in the clear
    ctx = ExecutionContext(run.trace)
    trajectories = run.trajectories_for_trace(ctx)
    ctx.destroy()
    insider = w.deploy(run.trace.manifest, _dump_logic, code_image=run.trace.code_image + b"#dump")
    res2 = _attempt(run, insider, trajectories[:3])
    out["2-insider-learns-high-risk"] = {"defended": res2 == "TE_UNKNOWN", "detail": f"modified_trace={res2}"}

    # 3: social graph extraction through an unapproved TE over stored trajectories
    graph = w.deploy(run.trace.manifest, _dump_logic, code_image=b"graph dump")
    res3 = _attempt(run, graph, trajectories[:3])
    blob = run.server.blob()
    leaked = any(_POINT.pack(r.x, r.y, r.time) in blob or repr(r.x).encode() in blob
                 for d in run.devices[:5] for r in d.uploaded[:3])
    out["3-social-graph"] = {"defended": res3 == "TE_UNKNOWN" and not leaked,
                             "detail": f"graph_te={res3} coords_on_channel={leaked}"}

    # 4: false claims, by a forged token and by a forged infection report
    mark = dict(run.flagged)
    bundle = run._forge(a)
    forged_ok = run.ingest_upload(bundle)
    a.clear(uploaded=False)
    run.flagged = mark
    outcome, _ = run.run_trace(2, forge=True)
    out["4-false-claims"] = {"defended": not forged_ok and outcome == TraceError.BAD_DOCTOR_SIGNATURE,
                             "detail": f"forged_token_accepted={forged_ok} forged_report={outcome}"}

    # 5: a phone withholds its uploads to look low-risk
    before = dict(run.flagged)
    run._upload_all(w.clock(), withhold={b.index}, forgers=set())
    flagged = run.flagged.get(b.index) == "missing-upload"
    run.flagged = before
    out["5-withhold-uploads"] = {"defended": flagged, "detail": f"flagged={flagged}"}
    return out


def contact_tracing_run(config: ScenarioConfig, seed: int, rules, manifests) -> ScenarioResult:
    return ContactTracingRun(config, seed, rules, manifests).run()
