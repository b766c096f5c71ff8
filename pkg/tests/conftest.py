import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from mmtail import fixtures  # noqa: E402


@pytest.fixture(params=sorted(fixtures.ALL))
def any_fixture(request):
    return request.param, fixtures.ALL[request.param]()


@pytest.fixture
def models_dir():
    return os.path.join(os.path.dirname(os.path.dirname(__file__)), "models")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
