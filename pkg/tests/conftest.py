import numpy as np
import pytest

from zeronoise import build_catalog_map


def pytest_terminal_summary(terminalreporter):
    lines = []
    for key in ("passed", "failed"):
        for rep in terminalreporter.stats.get(key, []):
            lines += [v for k, v in getattr(rep, "user_properties", []) if k == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def doubling():
    return build_catalog_map("doubling_d", d=2)


@pytest.fixture(scope="session")
def cat():
    return build_catalog_map("cat")


@pytest.fixture(scope="session")
def solenoid():
    return build_catalog_map("solenoid_alpha", alpha=0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
