import numpy as np
import pytest

import driftlock as dl


class LinearTwoClassOracle(dl.ClassifierOracle):
    """f(x) = (w.x, -w.x); the margin is 2 w.x."""

    def __init__(self, w):
        super().__init__()
        self.w = np.asarray(w, dtype=np.float64)
        self.num_classes = 2

    def _score(self, x):
        s = float(self.w.reshape(-1) @ x.reshape(-1))
        return np.array([s, -s])


class ConstantOracle(dl.ClassifierOracle):
    def __init__(self, logits):
        super().__init__()
        self.logits = np.asarray(logits, dtype=np.float64)
        self.num_classes = len(self.logits)

    def _score(self, x):
        return self.logits.copy()


class RecordingOracle(dl.ClassifierOracle):
    """Wraps another oracle, remembering every queried image and result."""

    def __init__(self, inner):
        super().__init__()
        self.inner = inner
        self.num_classes = inner.num_classes
        self.queries = []

    def _score(self, x):
        logits = self.inner.score(x)
        self.queries.append((x.copy(), logits.copy()))
        return logits


@pytest.fixture
def two_class_oracle():
    return LinearTwoClassOracle(np.ones((2, 2, 1)))


@pytest.fixture
def small_linear_zoo():
    return dl.make_zoo("linear", k=10, shape=(8, 8, 1), seed=3)


@pytest.fixture
def small_rbf_zoo():
    return dl.make_zoo("rbf", k=12, shape=(8, 8, 1), seed=5, gamma=1.0, temperature=1.0)
