import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

ADAPTERS = Path(__file__).parent / "adapters"
FIXTURES = Path(__file__).parent.parent / "fixtures"


def adapter(name):
    return f"{sys.executable} {ADAPTERS / name}"


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(test_acceptance.RESULTS, key=lambda k: (int(k.rstrip("abcd")), k)):
            terminalreporter.write_line(test_acceptance.RESULTS[key])
