import warnings
from pathlib import Path

import numpy as np
import pytest

from rigmotion import bvh

FIXTURES = Path(__file__).parent / "fixtures"


def fixture_bvh_paths():
    return sorted(FIXTURES.glob("*.bvh"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def fixture_docs():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", bvh.DroppedChannelWarning)
        return {p.name: bvh.read_bvh(p) for p in fixture_bvh_paths()}


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
