"""Shared harness for the scripted multi-party runs.

A :class:`World` owns the seeded randomness, the simulated clock, the
identity authority and the attestation platform. Every party draws its
randomness from a named fork of the world seed, so a run is a pure function
of (config, seed).
"""

from __future__ import annotations

import json
import shlex
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Callable, Iterable

from .. import crypto
from ..identity import IdentityAuthority, Individual, Issuer
from ..regulator import Regulator
from ..rules import AuthRule, load_rules, rules_for
from ..te import ChannelLog, Platform, Requester, TEInstance, TEManifest, code_image_of, parse_keyvalue

DEFAULT_START = 1_700_000_000


class ConfigError(ValueError):
    """Bad scenario config, rules or manifests (CLI exit code 2)."""


class SimClock:
    def __init__(self, start: int = DEFAULT_START):
        self.now = int(start)

    def __call__(self) -> int:
        return self.now

    def advance(self, seconds: int) -> None:
        if seconds < 0:
            raise ValueError("clock only moves forward")
        self.now += int(seconds)


# -- fixtures and config ------------------------------------------------------------


def fixtures_dir() -> Path:
    return Path(str(resources.files("pbdkit") / "fixtures"))


def load_manifests(directory: str | Path) -> dict[str, TEManifest]:
    directory = Path(directory)
    if not directory.is_dir():
        raise ConfigError(f"manifest directory not found: {directory}")
    out = {}
    for path in sorted(directory.glob("*.manifest")):
        try:
            m = TEManifest.parse(path.read_text(encoding="utf-8"))
        except ValueError as exc:
            raise ConfigError(f"{path.name}: {exc}") from exc
        out[m.name] = m
    return out


def require_manifests(manifests: dict[str, TEManifest], names: Iterable[str]) -> None:
    missing = [n for n in names if n not in manifests]
    if missing:
        raise ConfigError(f"missing manifests: {', '.join(missing)}")


def read_rules(path: str | Path) -> list[AuthRule]:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"rules file not found: {path}")
    try:
        return load_rules(path)
    except ValueError as exc:
        raise ConfigError(f"{path.name}: {exc}") from exc


@dataclass(frozen=True)
class Step:
    action: str
    args: dict[str, str]

    @property
    def expect(self) -> str | None:
        return self.args.get("expect")

    def get(self, key: str, default: Any = None) -> Any:
        return self.args.get(key, default)

    def int(self, key: str, default: int | None = None) -> int:
        if key not in self.args:
            if default is None:
                raise ConfigError(f"step {self.action!r} needs {key}=")
            return default
        try:
            return int(self.args[key])
        except ValueError:
            raise ConfigError(f"step {self.action!r}: {key} must be an integer") from None

    def __str__(self) -> str:
        return " ".join([self.action, *(f"{k}={v}" for k, v in self.args.items())])


def parse_step(text: str) -> Step:
    try:
        tokens = shlex.split(text)
    except ValueError as exc:
        raise ConfigError(f"bad step {text!r}: {exc}") from None
    if not tokens:
        raise ConfigError("empty step")
    args = {}
    for tok in tokens[1:]:
        key, eq, value = tok.partition("=")
        if not eq:
            raise ConfigError(f"step argument must be key=value: {tok!r}")
        args[key] = value
    return Step(tokens[0], args)


@dataclass
class ScenarioConfig:
    scenario: str
    params: dict[str, str]
    steps: list[Step]

    def int(self, key: str, default: int) -> int:
        try:
            return int(self.params.get(key, default))
        except ValueError:
            raise ConfigError(f"{key} must be an integer") from None

    def float(self, key: str, default: float) -> float:
        try:
            return float(self.params.get(key, default))
        except ValueError:
            raise ConfigError(f"{key} must be a number") from None

    def list(self, key: str, default: str) -> list[str]:
        return [s.strip() for s in self.params.get(key, default).split(",") if s.strip()]


def parse_config(text: str) -> ScenarioConfig:
    """``key: value`` lines (the manifest format); ``step:`` may repeat."""
    try:
        values = parse_keyvalue(text, multi=("step",))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    scenario = values.pop("scenario", None)
    if scenario is None:
        raise ConfigError("config missing 'scenario'")
    steps = [parse_step(s) for s in values.pop("step", [])]
    return ScenarioConfig(scenario, values, steps)


def load_config(path: str | Path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    return parse_config(path.read_text(encoding="utf-8"))


# -- transcript -------------------------------------------------------------------


@dataclass
class StepResult:
    index: int
    step: str
    expected: str | None
    outcome: str

    @property
    def ok(self) -> bool:
        return self.expected is None or self.expected == self.outcome


@dataclass
class ScenarioResult:
    scenario: str
    seed: int
    steps: list[StepResult] = field(default_factory=list)
    regulators: dict[str, Regulator] = field(default_factory=dict)
    invariants: dict[str, bool] = field(default_factory=dict)
    outputs: dict[str, Any] = field(default_factory=dict)
    extra_audits: dict[str, Any] = field(default_factory=dict)

    def record(self, step: Step | str, outcome: str, expected: str | None = None) -> StepResult:
        if isinstance(step, Step):
            expected = step.expect if expected is None else expected
        r = StepResult(len(self.steps), str(step), expected, outcome)
        self.steps.append(r)
        return r

    @property
    def ok(self) -> bool:
        return all(s.ok for s in self.steps) and all(self.invariants.values())

    def decision_tallies(self) -> dict[str, dict[str, int]]:
        out = {}
        for name, reg in sorted(self.regulators.items()):
            tally: dict[str, int] = {}
            for rec in reg.decisions.values():
                key = rec.verdict if rec.verdict == "GRANT" else f"DENY:{rec.reason}"
                tally[key] = tally.get(key, 0) + 1
            out[name] = dict(sorted(tally.items()))
        return out

    def audit_logs(self) -> dict[str, Any]:
        logs = {f"regulator:{n}": r.audit for n, r in sorted(self.regulators.items())}
        logs.update(self.extra_audits)
        return logs

    def report(self) -> dict[str, Any]:
        """Deterministic summary: a function of the transcript only."""
        digests = {k: crypto.hash(_canonical(v)).hex() for k, v in sorted(self.outputs.items())}
        return {
            "scenario": self.scenario,
            "seed": self.seed,
            "step_count": len(self.steps),
            "steps": [{"index": s.index, "step": s.step, "expected": s.expected,
                       "outcome": s.outcome, "ok": s.ok} for s in self.steps],
            "decisions": self.decision_tallies(),
            "invariants": dict(sorted(self.invariants.items())),
            "output_digests": digests,
            "audit_heads": {k: (log.entries[-1].entry_hash.hex() if len(log) else "")
                            for k, log in sorted(self.audit_logs().items())},
            "ok": self.ok,
        }


def _canonical(value: Any) -> bytes:
    if isinstance(value, bytes):
        return value
    return json.dumps(value, sort_keys=True, default=_jsonable).encode("utf-8")


def _jsonable(v: Any) -> Any:
    if isinstance(v, bytes):
        return v.hex()
    if isinstance(v, (set, frozenset)):
        return sorted(v, key=repr)
    raise TypeError(f"not serialisable: {type(v).__name__}")


def render_report(report: dict[str, Any]) -> str:
    return json.dumps(report, sort_keys=True, indent=2) + "\n"


# -- the world ----------------------------------------------------------------------


class World:
    """Common parties and plumbing for one seeded run."""

    def __init__(self, seed: int, rsa_bits: int = 1024, start: int = DEFAULT_START):
        self.seed = seed
        self.root = crypto.SeededRandomSource(seed, "world")
        self.rsa_bits = rsa_bits
        self.clock = SimClock(start)
        self.authority = IdentityAuthority(rng=self.fork("authority"), clock=self.clock,
                                           key_bits=rsa_bits)
        self.platform = Platform("platform-0", rng=self.fork("platform"))
        self.channel = ChannelLog()
        self.regulators: dict[str, Regulator] = {}
        self._people: dict[str, Individual] = {}
        self._deployed = 0

    def fork(self, label: str) -> crypto.SeededRandomSource:
        return self.root.fork(label)

    def regulator(self, name: str, rules: Iterable[AuthRule] = ()) -> Regulator:
        reg = Regulator(name, self.authority, rng=self.fork(f"regulator:{name}"), clock=self.clock,
                        rules=rules_for(list(rules), name))
        reg.trust_platform(self.platform.platform_id, self.platform.public_key)
        self.regulators[name] = reg
        return reg

    def person(self, key: str) -> Individual:
        if key not in self._people:
            self._people[key] = Individual(self.authority, key, rng=self.fork(f"person:{key}"))
        return self._people[key]

    def issuer(self, name: str, attributes: Iterable[str]) -> Issuer:
        return Issuer(name, list(attributes), rng=self.fork(f"issuer:{name}"), key_bits=self.rsa_bits)

    def deploy(self, manifest: TEManifest, logic: Callable, regulators: Iterable[Regulator] = (),
               code_image: bytes | None = None, risk: str = "reviewed") -> TEInstance:
        """Load a TE on the world platform and approve it at each regulator."""
        image = code_image if code_image is not None else code_image_of(logic)
        label = f"{manifest.name}:{self._deployed}"
        self._deployed += 1
        te = TEInstance(manifest, image, logic, self.platform,
                        crypto.generate_keypair(self.fork(f"te-producer:{label}")),
                        self.fork(f"te:{label}"))
        for reg in regulators:
            reg.approve_te(manifest, image, risk)
        return te

    def staff(self, key: str, org: str, role: str, issuer: Issuer) -> Requester:
        """A human requester: registered vid plus a ``role:<role>`` credential."""
        person = self.person(key)
        vid = person.register(org)
        kp = person.keypair(vid)
        attr = f"role:{role}"
        issuer.enrol_subject(vid.value, kp.public_key, [attr])
        cred = issuer.issue_plain(vid.value, attr)
        return Requester(vid.value, kp, cred.to_bytes())


def tampered_copy(te: TEInstance, offset: int) -> TEInstance:
    """Same TE with one byte of its code image flipped."""
    image = bytearray(te.code_image)
    image[offset % len(image)] ^= 0x01
    return TEInstance(te.manifest, bytes(image), te.logic, te.platform, te.producer, te.rng)
