import pytest

from amoled_power import reference


@pytest.fixture(scope="session")
def ref():
    return reference.panel()


@pytest.fixture(scope="session")
def case():
    return {name: reference.chains(name) for name in ("case_a", "case_b", "case_c", "case_a_pvee_2v9",
                                                      "voltage_baseline", "voltage_tuned")}


_CRITERIA: dict = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    n, title = mark.args
    if rep.failed or rep.when == "call":
        ok = rep.passed and _CRITERIA.get(n, (True,))[0]
        _CRITERIA[n] = (ok, title)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        ok, title = _CRITERIA[n]
        terminalreporter.write_line(f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {title}")
