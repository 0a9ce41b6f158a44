import numpy as np
import pytest

from relmetric.config import TrainConfig
from relmetric.model import RelationMetricNetwork
from relmetric.synthetic import synthetic_corpus


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def corpus():
    return synthetic_corpus(20, seed=0)


def tiny_config(**overrides):
    base = dict(channels=3, layers=2, char_dim=4, char_features=5, position_dim=3, dep_dim=2,
                word_dim=4, context_dim=6, dropout=0.0, epochs=2)
    base.update(overrides)
    return TrainConfig(**base)


@pytest.fixture
def tiny_model(corpus):
    return RelationMetricNetwork.build(tiny_config(), corpus, rng=np.random.default_rng(7))


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line per acceptance criterion for the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def report(name, passed, detail):
        lines.append(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
        print(lines[-1])
        return passed

    return report


ACCEPTANCE_KEY = pytest.StashKey[list]()


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
