import numpy as np
import pytest

from proxmax import Point, log_positive, make_problem


@pytest.fixture
def rng():
    return np.random.default_rng(42)


@pytest.fixture
def log_example():
    """One-dimensional positive-orthant problem with branches ln x and -ln x + e^(-2x) - e^(-2)."""
    return make_problem("paper_example")


@pytest.fixture
def log_point():
    return Point(log_positive(1), [1.0])
