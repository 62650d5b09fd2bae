import pytest
from hypothesis import settings

from cellfree_wsr.network import NetworkConfig, generate

from .helpers import even_counts, random_channels

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def small():
    ch = random_channels(7)
    return ch, even_counts(ch, 1)


@pytest.fixture(scope="session")
def reference_net():
    return generate(NetworkConfig(), seed=3)


def pytest_terminal_summary(terminalreporter):
    from .helpers import ACCEPTANCE

    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
