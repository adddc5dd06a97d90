import pytest
from hypothesis import given
from hypothesis import strategies as st

from pbdkit.crypto import TypeId
from pbdkit.patterns import TypePattern
from pbdkit.rules import AuthRule, Bindings, PredicateTemplate, RuleError, parse_rule, parse_rules, rules_for

LINE = ("rule_id=doctor-view priority=10 te=DoctorTerminal data='DT4/*(?x)' requester='doctor(?y)' "
        "requires='consent(?x, consulted, ?y)'")


def test_parse_fields():
    r = parse_rule(LINE)
    assert r.rule_id == "doctor-view" and r.priority == 10
    assert r.data_type_pattern == TypePattern("DT4/*", "?x")
    assert r.requester_pattern.role == "doctor"
    assert r.required_predicates == (PredicateTemplate("consent", ("?x", "consulted", "?y")),)


def test_to_line_roundtrip(scenario_rules):
    for rules in scenario_rules.values():
        for r in rules:
            assert parse_rule(r.to_line()) == r


@pytest.mark.parametrize("bad", [
    "rule_id=a te=T",
    "rule_id=a te=T data=X bogus=1",
    "rule_id=a te=T data=X requires='consent(?x, v, o)'",
    "rule_id=a te=T data=X requires='consent(a, b)'",
    "rule_id=a te=T data=X requires='maybe(a, b, c)'",
    "rule_id=a te=T data=X requester=doctor",
    "rule_id=a te=T data=X noequals",
])
def test_parse_errors(bad):
    with pytest.raises(RuleError):
        parse_rule(bad)


def test_duplicate_ids_rejected():
    with pytest.raises(RuleError):
        parse_rules("rule_id=a te=T data=X\nrule_id=a te=U data=Y\n")


def test_comments_and_blank_lines():
    assert len(parse_rules("# c\n\nrule_id=a te=T data=X\n")) == 1


def test_sort_order():
    rules = parse_rules("rule_id=b priority=1 te=T data=X\nrule_id=a priority=1 te=T data=X\n"
                        "rule_id=z priority=5 te=T data=X\n")
    assert [r.rule_id for r in sorted(rules, key=AuthRule.sort_key)] == ["z", "a", "b"]


def test_te_patterns():
    r = parse_rule("rule_id=a te='Analytics*' data=X")
    assert r.matches_te("AnalyticsRows", "") and not r.matches_te("Doctor", "")
    m = parse_rule("rule_id=b te=m:abcd data=X")
    assert m.matches_te("anything", "abcd1234") and not m.matches_te("anything", "ffff")


def test_validity_window():
    r = parse_rule("rule_id=a te=T data=X valid_from=10 valid_until=20")
    assert [r.in_window(t) for t in (9, 10, 20, 21)] == [False, True, True, False]


def test_rules_for_regulator():
    rules = parse_rules("rule_id=a te=T data=X regulator=R1\nrule_id=b te=T data=X\n"
                        "rule_id=c te=T data=X regulator=R2\n")
    assert [r.rule_id for r in rules_for(rules, "R1")] == ["a", "b"]


def test_bindings_resolve():
    b = Bindings({"?x": "aa"})
    assert b.resolve("?x") == "aa" and b.resolve("lit") == "lit"


@given(st.from_regex(r"[A-Z][A-Za-z0-9]{0,6}/[A-Za-z0-9]{1,8}", fullmatch=True))
def test_type_pattern_glob(name):
    assert TypePattern(name.split("/")[0] + "/*").matches(TypeId(name))
    assert TypePattern(name).matches(TypeId(name, "x"))
    assert not TypePattern(name + "Z").matches(TypeId(name))
