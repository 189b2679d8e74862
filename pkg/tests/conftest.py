import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from affect_dynamics.clusters import ClusterLexicon

# derandomized so the suite is reproducible run to run
settings.register_profile("repo", derandomize=True, deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def lexicon():
    return ClusterLexicon.default()


def toy_lexicon(extra=None):
    """Ten clusters c0..c9 with six single-word keywords each (k<c>_<i>)."""
    clusters = [(f"c{c}", [f"k{c}x{i}" for i in range(6)]) for c in range(10)]
    if extra:
        for c, words in extra.items():
            clusters[c][1].extend(words)
    return ClusterLexicon(clusters)


def pytest_terminal_summary(terminalreporter):
    from tests_acceptance_results import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
