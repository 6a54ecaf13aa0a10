import numpy as np
import pytest

from traceppl import corpus
from traceppl.dsl import parse_model
from traceppl.interpreter import instantiate


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def small_linreg(y=None):
    X = np.array([[1.0, 0.5], [0.2, -1.0], [1.5, 2.0]])
    y = np.array([1.0, -0.5, 2.5]) if y is None else y
    return corpus.load("linreg", {"X": X, "y": y})


def model_from(src, **data):
    return instantiate(parse_model(src), data)


def pytest_terminal_summary(terminalreporter):
    import test_acceptance

    if test_acceptance.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(test_acceptance.RESULTS, key=lambda s: int(s.split("[")[1].split("]")[0])):
            terminalreporter.write_line(line)
