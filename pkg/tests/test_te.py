import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbdkit import crypto
from pbdkit.crypto import TypeId
from pbdkit.rules import parse_rules
from pbdkit.scenarios.common import World, tampered_copy
from pbdkit.te import (
    ChannelLog,
    ExecutionContext,
    ManifestError,
    MinimisationPolicy,
    Output,
    TEError,
    TEManifest,
    code_image_of,
    measure,
    minimise,
    parse_keyvalue,
    render_notification,
    run_te,
)


def passthrough(inputs):
    return [Output(TypeId("Out/Copy", "x"), i.subject, i.payload) for i in inputs]


def summarise(inputs):
    return [Output(TypeId("Out/View", "x"), i.subject, {"a": 1, "b": 2, "secret": "s"}) for i in inputs]


def rogue(inputs):
    return [Output(TypeId("Undeclared/Type"), b"", b"x")]


def test_manifest_roundtrip(manifests):
    for m in manifests.values():
        assert TEManifest.parse(m.to_text()) == m


def test_manifest_missing_field():
    with pytest.raises(ManifestError):
        TEManifest.parse("name: X\nversion: 1\n")


@pytest.mark.parametrize("text", ["allowed=a,b; aggregate_only=false",
                                  "allowed=x; aggregate_only=true",
                                  "allowed=n; aggregate_only=false; template=Hi {n}; bye"])
def test_policy_roundtrip(text):
    assert MinimisationPolicy.parse(text).to_text() == text


def test_policy_errors():
    with pytest.raises(ManifestError):
        MinimisationPolicy.parse("allowed=a")
    with pytest.raises(ManifestError):
        MinimisationPolicy.parse("junk")


def test_parse_keyvalue_multi():
    v = parse_keyvalue("# c\na: 1\nstep: x\nstep: y\n", multi=("step",))
    assert v == {"a": "1", "step": ["x", "y"]}
    with pytest.raises(ValueError):
        parse_keyvalue("a: 1\na: 2\n")


def test_minimise_row_and_aggregate():
    p = MinimisationPolicy(("a", "b"))
    assert minimise({"a": 1, "b": 2, "c": 3}, p) == {"a": 1, "b": 2}
    agg = MinimisationPolicy(("k",), aggregate_only=True)
    rows = [{"k": "x"}, {"k": "y"}, {"k": "x"}, {"z": 1}]
    assert minimise(rows, agg) == {"k": {"x": 2, "y": 1}}


@given(st.lists(st.sampled_from("abcde"), max_size=50))
def test_aggregate_equals_recount(values):
    rows = [{"v": x, "other": i} for i, x in enumerate(values)]
    out = minimise(rows, MinimisationPolicy(("v",), aggregate_only=True))["v"]
    assert out == {k: values.count(k) for k in set(values)}


def test_notification_uses_allowed_fields_only():
    p = MinimisationPolicy(("n",), notification_template="Contact on {n}")
    assert render_notification({"n": "day 3", "x": 1}, p) == "Contact on day 3"
    with pytest.raises(KeyError):
        render_notification({"n": 1}, MinimisationPolicy(("n",), notification_template="{x}"))


def test_measurement_binds_code_and_manifest():
    m = TEManifest("T", "1", ("A",), ("B",))
    base = measure(m, b"code")
    assert measure(m, b"codf") != base
    assert measure(TEManifest("T", "2", ("A",), ("B",)), b"code") != base
    assert code_image_of(passthrough).startswith(b"def passthrough")


class Rig:
    def __init__(self, logic, sink=False, policy=None, inputs=("In/*(x)",), outputs=("Out/*(x)",)):
        self.w = World(5, rsa_bits=1024)
        self.reg = self.w.regulator("R", parse_rules("rule_id=all te='*' data='In/*(?x)'"))
        m = TEManifest("T", "1", inputs, outputs, sink, policy)
        self.te = self.w.deploy(m, logic, [self.reg])
        self.producer = crypto.generate_keypair(self.w.fork("p"))
        self.subject = self.w.person("s").register("Org")

    def env(self, t="In/Rec", payload=b"hello"):
        return crypto.seal(TypeId(t, "x"), self.subject, payload, self.reg.public_key, self.producer,
                           self.w.fork(t + payload.hex()))

    def run(self, envs, **kw):
        return run_te(self.te, envs, self.reg, producers=[self.producer.public_key],
                      sealing_key=self.reg.public_key, **kw)


def test_run_produces_sealed_outputs():
    rig = Rig(passthrough)
    ch = ChannelLog()
    res = rig.run([rig.env(), rig.env(payload=b"two")], channel=ch)
    assert [e.type_id for e in res.envelopes] == [TypeId("Out/Copy", "x")] * 2
    assert [k for _, k, _ in ch.records].count("access-request") == 2
    assert b"hello" not in ch.blob()
    steps = [s for s, _ in res.events]
    assert steps[:5] == ["attest", "request", "provisioned", "decrypt", "attest"]


def test_input_type_violation():
    rig = Rig(passthrough)
    with pytest.raises(TEError) as e:
        rig.run([rig.env("Other/Rec")])
    assert e.value.code == TEError.TYPE_VIOLATION


def test_output_type_violation_returns_nothing():
    rig = Rig(rogue)
    with pytest.raises(TEError) as e:
        rig.run([rig.env()])
    assert e.value.code == TEError.TYPE_VIOLATION


def test_sink_needs_requester():
    rig = Rig(summarise, sink=True, policy=MinimisationPolicy(("a",)))
    with pytest.raises(TEError) as e:
        rig.run([rig.env()])
    assert e.value.reason == "REQUESTER_UNAUTHENTICATED"


@pytest.mark.parametrize("policy,expected", [
    (MinimisationPolicy(("a",)), [{"a": 1}]),
    (MinimisationPolicy(("a", "b"), aggregate_only=True), [{"a": {"1": 1}, "b": {"2": 1}}]),
])
def test_sink_minimises(policy, expected):
    rig = Rig(summarise, sink=True, policy=policy)
    rig.reg.add_rules(parse_rules("rule_id=sink priority=5 te=T data='In/*(?x)' requester='clerk(?y)'"))
    hr = rig.w.issuer("HR", ["role:clerk"])
    rig.reg.trust_issuer("HR", hr.public_key)
    clerk = rig.w.staff("clerk", "Org", "clerk", hr)
    ch = ChannelLog()
    res = rig.run([rig.env()], requester=clerk, channel=ch)
    assert res.sink_output == expected
    assert b"secret" not in ch.blob()


def test_tampered_copy_is_unknown():
    rig = Rig(passthrough)
    bad = tampered_copy(rig.te, 3)
    with pytest.raises(TEError) as e:
        run_te(bad, [rig.env()], rig.reg, producers=[rig.producer.public_key])
    assert e.value.reason == "TE_UNKNOWN"


def test_untrusted_producer_fails_after_grant():
    rig = Rig(passthrough)
    with pytest.raises(crypto.EnvelopeError):
        run_te(rig.te, [rig.env()], rig.reg, producers=[])


def test_context_destroyed_after_run():
    rig = Rig(passthrough)
    ctx = ExecutionContext(rig.te)
    rig.run([rig.env()], context=ctx)
    assert not ctx.alive and ctx.session is None
    with pytest.raises(KeyError):
        ctx.key(0)
