import pytest

from bislant.cli import fixture_text
from bislant.immersion import load_spec, sample_domain

ACCEPTANCE_LINES: list[str] = []


def load_fixture(name: str):
    return load_spec(fixture_text(name))


@pytest.fixture(scope="session")
def ex61():
    return load_fixture("ex61.lps")


@pytest.fixture(scope="session")
def ex62():
    return load_fixture("ex62.lps")


@pytest.fixture(scope="session")
def ex61_points(ex61):
    return sample_domain(ex61, 8).points


@pytest.fixture(scope="session")
def ex62_points(ex62):
    return sample_domain(ex62, 8).points


@pytest.fixture
def criterion():
    """Record one acceptance line; printed in the terminal summary."""
    def record(number: int, passed: bool, detail: str):
        ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if passed else 'FAIL'}  {detail}")
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
