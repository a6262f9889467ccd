from pathlib import Path

import pytest

from derplan import load_case

CASES = Path(__file__).resolve().parents[1] / "cases"


@pytest.fixture(scope="session")
def toy5():
    return load_case(CASES / "toy5.json")


@pytest.fixture(scope="session")
def ieee33():
    return load_case(CASES / "ieee33_template.json")


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
