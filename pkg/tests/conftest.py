import numpy as np
import pytest

from smgo.lib.core import History, Sample, SearchSpace


def make_history(space, points, values, gamma=None):
    history = History.from_samples(space, [Sample(np.atleast_1d(x), z) for x, z in zip(points, values)])
    if gamma is not None:
        history.gamma = gamma
    return history


@pytest.fixture
def unit_line():
    return SearchSpace([0.0], [1.0])


@pytest.fixture
def two_cones(unit_line):
    """Samples ([0], 0) and ([1], 2) with gamma = 2 on [0, 1]."""
    return make_history(unit_line, [[0.0], [1.0]], [0.0, 2.0], gamma=2.0)
