import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from modforge import data  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    spec = data.SyntheticSpec(
        num_classes=3, num_samples=300,
        modalities=(data.SyntheticModality("a", 6, 2.0), data.SyntheticModality("v", 5, 0.7)),
        seed=3,
    )
    ds = data.generate(spec)
    return ds, data.split(ds, seed=3)


def pytest_terminal_summary(terminalreporter):
    from acceptance_report import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for number in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[number])
