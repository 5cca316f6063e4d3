import os
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from qmbrl import dataset, surrogate, vqc  # noqa: E402

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# criterion lines collected by test_acceptance and echoed after the run
CRITERIA: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def full_transitions():
    return dataset.generate(0)


@pytest.fixture(scope="session")
def full_dataset(full_transitions):
    return dataset.split(full_transitions)


@pytest.fixture(scope="session")
def small_dataset():
    return dataset.split(dataset.generate(1, 600), (400, 100, 100), seed=1)


@pytest.fixture(scope="session")
def small_model(small_dataset):
    """A quickly trained, lightly accurate surrogate for plumbing tests."""
    t = vqc.build_model_template(reuploads=1, layers_per_upload=2)
    return surrogate.train(small_dataset, t, epochs=2, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def full_model(full_dataset):
    """Surrogate trained with the default settings on the seed-0 dataset (about a minute)."""
    return surrogate.train(full_dataset, seed=0)
