import pytest

from synth_fixtures import make_background, make_cutout

ACCEPTANCE_RESULTS: dict[str, str] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    name = report.nodeid.split("::")[-1]
    ACCEPTANCE_RESULTS[name] = report.outcome.upper()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for name, outcome in sorted(ACCEPTANCE_RESULTS.items()):
        terminalreporter.write_line(f"{name}: {outcome}")


@pytest.fixture
def background():
    return make_background()


@pytest.fixture
def cutout():
    return make_cutout()
