import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class FakeStateClassifier:
    """Deterministic log-odds stub: log_odds(s, g) = fn(s, g) elementwise."""

    def __init__(self, fn):
        self.fn = fn

    def log_odds(self, s, g):
        s = np.atleast_2d(np.asarray(s, dtype=np.float64))
        g = np.atleast_2d(np.asarray(g, dtype=np.float64))
        return np.array([self.fn(si, gi) for si, gi in zip(s, g)])


@pytest.fixture
def fake_classifier_factory():
    return FakeStateClassifier
