import sys
from pathlib import Path

import pytest

# make the shared oracle helpers importable from any test module
sys.path.insert(0, str(Path(__file__).parent))


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "slow: oracle suites and desk-scale runs (minutes)"
    )
    config.addinivalue_line(
        "markers", "acceptance: end-to-end acceptance criteria"
    )
