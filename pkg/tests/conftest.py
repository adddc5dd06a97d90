import pytest

from pbdkit import crypto
from pbdkit.scenarios.common import fixtures_dir, load_manifests, read_rules


@pytest.fixture(scope="session")
def blind_key():
    return crypto.generate_blind_keypair(1024, crypto.SeededRandomSource(7, "blind-key"))


@pytest.fixture(scope="session")
def fixtures():
    return fixtures_dir()


@pytest.fixture(scope="session")
def manifests(fixtures):
    return load_manifests(fixtures / "manifests")


@pytest.fixture(scope="session")
def scenario_rules(fixtures):
    return {name: read_rules(fixtures / f"{name}.rules") for name in ("ehr", "dbt", "contact")}


@pytest.fixture
def rng(request):
    return crypto.SeededRandomSource(request.node.name, "test")


# -- acceptance reporting: one PASS/FAIL line per criterion ---------------------------

_criteria: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call" and not rep.failed:
        return
    n = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    if rep.when == "call" or rep.failed:
        _criteria[n] = ("PASS" if rep.passed else "FAIL", detail or item.name)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        verdict, detail = _criteria[n]
        terminalreporter.write_line(f"criterion {n:>2}: {verdict}  {detail}")
