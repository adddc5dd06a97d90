"""Static authorisation rules.

One rule per line, named fields, shell-style quoting::

    rule_id=doctor-view priority=10 te=DoctorTerminal data=DT4/*(?x) requester=doctor(?y) requires="consent(?x, consulted, ?y)"

Terms beginning with ``?`` are variables. ``?x``-style variables are bound
from the envelope subject (data pattern) and the requester's vid (requester
pattern); everything else is a literal. Predicates are conjunctive, there is
no negation, and the highest-priority matching rule decides alone.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path

from .patterns import TypePattern

_PRED = re.compile(r"^\s*(consent|approval)\s*\((.*)\)\s*$")


class RuleError(ValueError):
    pass


def is_variable(term: str) -> bool:
    return term.startswith("?") and len(term) > 1


@dataclass(frozen=True)
class PredicateTemplate:
    """``consent(subject, verb, object)`` or ``approval(approver, subject, attribute)``."""

    kind: str
    args: tuple[str, str, str]

    @classmethod
    def parse(cls, text: str) -> "PredicateTemplate":
        m = _PRED.match(text)
        if not m:
            raise RuleError(f"bad predicate {text!r}")
        args = tuple(a.strip() for a in m.group(2).split(","))
        if len(args) != 3 or not all(args):
            raise RuleError(f"{m.group(1)} takes three arguments: {text!r}")
        return cls(m.group(1), args)  # type: ignore[arg-type]

    def variables(self) -> set[str]:
        return {a for a in self.args if is_variable(a)}

    def __str__(self) -> str:
        return f"{self.kind}({', '.join(self.args)})"


@dataclass(frozen=True)
class RequesterPattern:
    role: str
    variable: str

    @classmethod
    def parse(cls, text: str) -> "RequesterPattern":
        m = re.match(r"^\s*([^()\s]+)\s*\(\s*(\?\w+)\s*\)\s*$", text)
        if not m:
            raise RuleError(f"bad requester pattern {text!r}")
        return cls(m.group(1), m.group(2))

    def __str__(self) -> str:
        return f"{self.role}({self.variable})"


@dataclass(frozen=True)
class AuthRule:
    rule_id: str
    te_pattern: str
    data_type_pattern: TypePattern
    requester_pattern: RequesterPattern | None = None
    required_predicates: tuple[PredicateTemplate, ...] = ()
    priority: int = 0
    valid_from: int | None = None
    valid_until: int | None = None
    regulator: str | None = None

    def __post_init__(self):
        declared = set()
        if self.data_type_pattern.variable is not None:
            if not is_variable(self.data_type_pattern.variable):
                raise RuleError(f"{self.rule_id}: data subject must be a ?variable")
            declared.add(self.data_type_pattern.variable)
        if self.requester_pattern is not None:
            declared.add(self.requester_pattern.variable)
        for p in self.required_predicates:
            unbound = p.variables() - declared
            if unbound:
                raise RuleError(f"{self.rule_id}: unbound variables {sorted(unbound)} in {p}")

    def sort_key(self) -> tuple[int, str]:
        return (-self.priority, self.rule_id)

    def matches_te(self, te_name: str, measurement_hex: str) -> bool:
        if self.te_pattern.startswith("m:"):
            return measurement_hex.startswith(self.te_pattern[2:])
        return fnmatchcase(te_name, self.te_pattern)

    def in_window(self, now: int) -> bool:
        if self.valid_from is not None and now < self.valid_from:
            return False
        if self.valid_until is not None and now > self.valid_until:
            return False
        return True

    def to_line(self) -> str:
        fields = [
            ("rule_id", self.rule_id),
            ("priority", self.priority),
            ("te", self.te_pattern),
            ("data", self.data_type_pattern),
            ("requester", self.requester_pattern or "-"),
            ("requires", "; ".join(map(str, self.required_predicates)) or "-"),
            ("valid_from", "-" if self.valid_from is None else self.valid_from),
            ("valid_until", "-" if self.valid_until is None else self.valid_until),
        ]
        if self.regulator is not None:
            fields.append(("regulator", self.regulator))
        return " ".join(f"{k}={shlex.quote(str(v))}" for k, v in fields)


_RULE_FIELDS = {"rule_id", "priority", "te", "data", "requester", "requires",
                "valid_from", "valid_until", "regulator"}


def parse_rule(line: str) -> AuthRule:
    values: dict[str, str] = {}
    for tok in shlex.split(line):
        key, eq, value = tok.partition("=")
        if not eq:
            raise RuleError(f"expected key=value, got {tok!r}")
        if key not in _RULE_FIELDS:
            raise RuleError(f"unknown rule field {key!r}")
        values[key] = value
    for required in ("rule_id", "te", "data"):
        if required not in values:
            raise RuleError(f"rule missing {required!r}: {line!r}")
    opt = lambda k: None if values.get(k, "-") == "-" else values[k]  # noqa: E731
    requester = opt("requester")
    requires = opt("requires")
    preds = tuple(PredicateTemplate.parse(p) for p in requires.split(";") if p.strip()) if requires else ()
    vf, vu = opt("valid_from"), opt("valid_until")
    return AuthRule(
        rule_id=values["rule_id"],
        te_pattern=values["te"],
        data_type_pattern=TypePattern.parse(values["data"]),
        requester_pattern=RequesterPattern.parse(requester) if requester else None,
        required_predicates=preds,
        priority=int(values.get("priority", "0")),
        valid_from=int(vf) if vf is not None else None,
        valid_until=int(vu) if vu is not None else None,
        regulator=opt("regulator"),
    )


def parse_rules(text: str) -> list[AuthRule]:
    rules = []
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            rules.append(parse_rule(line))
        except RuleError as exc:
            raise RuleError(f"line {n}: {exc}") from None
    ids = [r.rule_id for r in rules]
    if len(set(ids)) != len(ids):
        raise RuleError("duplicate rule_id")
    return rules


def load_rules(path: str | Path) -> list[AuthRule]:
    return parse_rules(Path(path).read_text(encoding="utf-8"))


def rules_for(rules: list[AuthRule], regulator: str) -> list[AuthRule]:
    """Rules addressed to ``regulator`` plus any without a ``regulator`` field."""
    return [r for r in rules if r.regulator in (None, regulator)]


@dataclass
class Bindings:
    values: dict[str, str] = field(default_factory=dict)

    def resolve(self, term: str) -> str:
        return self.values[term] if is_variable(term) else term
