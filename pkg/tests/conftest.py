import os

import pytest
from hypothesis import HealthCheck, settings

from brwre.envmodel import EnvironmentLaw, named_environment

settings.register_profile(
    "default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow]
)
settings.register_profile("ci", deadline=None, max_examples=200)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def E1():
    return named_environment("E1")


@pytest.fixture(scope="session")
def E3():
    return named_environment("E3")


@pytest.fixture(scope="session")
def E4():
    return named_environment("E4")


@pytest.fixture(scope="session")
def binary():
    return named_environment("BINARY")


@pytest.fixture(scope="session")
def delta2():
    return EnvironmentLaw.deterministic({2: 1})


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES.append


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[0][1:])):
            terminalreporter.write_line(line)
