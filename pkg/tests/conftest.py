import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

ROOT = Path(__file__).resolve().parents[1]
DATA = Path(__file__).parent / "data"
CONFIGS = ROOT / "configs"

settings.register_profile("fragsim", max_examples=40, deadline=None)
settings.load_profile("fragsim")

# lines collected by the acceptance suite, echoed in the terminal summary
ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def oracles():
    with (DATA / "oracles.json").open() as fh:
        return json.load(fh)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
