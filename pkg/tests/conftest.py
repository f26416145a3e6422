import pytest

from edgesim.scenario import preset


@pytest.fixture
def desk():
    return preset("desk")


@pytest.fixture
def tiny():
    """Three edge servers, short horizon: quick end-to-end runs."""
    return preset("desk", duration_s=60.0, device_counts=[30], seeds=[0, 1],
                  training={"episodes": 2, "device_count": 30, "seed": 500})


# one PASS/FAIL line per acceptance criterion, printed after the run
_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    n, title = mark.args
    ok = _ACCEPTANCE.get(n, (title, True))[1]
    if rep.when == "call" or rep.failed:
        ok = ok and not rep.failed and not rep.skipped
        _ACCEPTANCE[n] = (title, ok)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, ok = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}")
