import os

import numpy as np
import pytest
from hypothesis import settings

from federated.problems import (
    ProblemInstance, QuadLogSumParams, QuadraticLogSumClient, gen_quadratic_logsum, quadratic_constants,
)

settings.register_profile("ci", derandomize=True, max_examples=50, deadline=None)
settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


def diagonal_problem(curvatures, linears, alpha: float = 0.0) -> ProblemInstance:
    """One client per row of ``curvatures``/``linears``; plain diagonal quadratics when alpha is 0."""
    clients = tuple(QuadraticLogSumClient(c, b, 0.0, alpha) for c, b in zip(np.atleast_2d(curvatures),
                                                                             np.atleast_2d(linears)))
    return ProblemInstance(clients=clients, dim=clients[0].dim, lower_bound_hint=None, name="diagonal")


@pytest.fixture
def small_problem():
    return gen_quadratic_logsum(QuadLogSumParams(n=6, d=4, b=2), seed=1)


@pytest.fixture
def small_constants(small_problem):
    return quadratic_constants(small_problem)


@pytest.fixture(scope="session")
def desk_problem():
    return gen_quadratic_logsum(QuadLogSumParams.desk(), seed=0)


@pytest.fixture(scope="session")
def desk_constants(desk_problem):
    return quadratic_constants(desk_problem)


@pytest.fixture
def convex_problem():
    """Six diagonal quadratics with curvatures in [1, 4]; no penalty, so f is convex."""
    rng = np.random.default_rng(3)
    curv = rng.uniform(1.0, 4.0, size=(6, 5))
    lin = rng.uniform(-2.0, 2.0, size=(6, 5))
    return diagonal_problem(curv, lin)
