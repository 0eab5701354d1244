from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from helpers import load_corpus

settings.register_profile("ownlab", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("ownlab")


@pytest.fixture
def corpus():
    return load_corpus


def pytest_terminal_summary(terminalreporter):
    """Print the acceptance result lines collected by ``test_acceptance``."""
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in mod.RESULTS:
        terminalreporter.write_line(line)
