import numpy as np
import pytest

from yieldnet.data_model import join_trials, split_by_year
from yieldnet.synth import SynthConfig, generate_synthetic

TINY = SynthConfig(n_hybrids=40, n_locations=6, p_markers=60, hybrids_per_environment=8, seed=11)


@pytest.fixture(scope="session")
def tiny_tables():
    return generate_synthetic(TINY)


@pytest.fixture(scope="session")
def tiny_dataset(tiny_tables):
    markers, env, perf, _ = tiny_tables
    return join_trials(markers, env, perf)


@pytest.fixture(scope="session")
def tiny_split(tiny_dataset):
    return split_by_year(tiny_dataset)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split("]")[0].split("[")[1])):
            terminalreporter.write_line(line)
