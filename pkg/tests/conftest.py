import re

import pytest

from gsl2sql import fixture_text
from gsl2sql.parser import parse_model

_CRITERIA = {}


@pytest.fixture(scope="session")
def hrs():
    return parse_model(fixture_text("hrs.boo"))


def pytest_runtest_logreport(report):
    m = re.search(r"test_acceptance\.py::test_criterion_(\d+)_(\w+)", report.nodeid)
    if not m:
        return
    key = (int(m.group(1)), m.group(2))
    if report.when == "call" or report.outcome != "passed":
        _CRITERIA[key] = "PASS" if report.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for (n, name), outcome in sorted(_CRITERIA.items()):
        terminalreporter.write_line(f"criterion {n} {name.replace('_', ' ')}: {outcome}")
