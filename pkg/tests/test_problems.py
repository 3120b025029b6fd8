import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import sparse

from conftest import diagonal_problem
from federated.errors import DataError, DegenerateInputError, InvalidInputError
from federated.libsvm import LibsvmDataset
from federated.problems import (
    ConstantTracker, QuadLogSumParams, SimilarityConstants, estimate_constants, gen_logistic_nonconvex,
    gen_quadratic_logsum, participation_factor, sample_constants, quadratic_constants,
)


def _numeric_gradient(fn, x, h=1e-6):
    grad = np.zeros_like(x)
    for k in range(x.size):
        e = np.zeros_like(x)
        e[k] = h
        grad[k] = (fn(x + e) - fn(x - e)) / (2 * h)
    return grad


def _toy_dataset(rows=40, d=6, seed=0):
    rng = np.random.default_rng(seed)
    dense = rng.standard_normal((rows, d)) * (rng.random((rows, d)) < 0.5)
    labels = np.where(rng.random(rows) < 0.5, -1.0, 1.0)
    return LibsvmDataset(features=sparse.csr_matrix(dense), labels=labels)


# ─── Quadratic / log-sum ───────────────────────────────────
def test_generator_is_deterministic_per_seed():
    params = QuadLogSumParams(n=5, d=7, b=3)
    a = gen_quadratic_logsum(params, seed=11)
    b = gen_quadratic_logsum(params, seed=11)
    c = gen_quadratic_logsum(params, seed=12)
    np.testing.assert_array_equal(a.metadata["diagonals"], b.metadata["diagonals"])
    assert not np.array_equal(a.metadata["diagonals"], c.metadata["diagonals"])


def test_desk_diagonals_lie_in_clip_range():
    problem = gen_quadratic_logsum(QuadLogSumParams.desk(), seed=0)
    diagonals = problem.metadata["diagonals"]
    assert problem.n == 20 and problem.dim == 50
    assert diagonals.min() >= 0.0
    assert diagonals.max() <= 100.0
    # some eigenvalues are pushed close to zero
    assert np.any(diagonals < 1.0)


def test_full_objective_and_gradient_are_client_means(small_problem):
    x = np.linspace(0.5, 2.0, small_problem.dim)
    values = [small_problem.client_value(i, x) for i in range(small_problem.n)]
    assert small_problem.full_objective(x) == pytest.approx(np.mean(values))
    np.testing.assert_allclose(small_problem.full_gradient(x), small_problem.client_gradients(x).mean(axis=0))


def test_quadratic_gradient_matches_finite_differences(small_problem):
    # stay away from the kink of the log-sum penalty at zero
    x = np.array([0.7, 1.3, 2.1, 0.4])
    for i in range(small_problem.n):
        numeric = _numeric_gradient(lambda z: small_problem.client_value(i, z), x)
        np.testing.assert_allclose(small_problem.client_gradient(i, x), numeric, rtol=1e-5, atol=1e-5)


def test_penalty_is_flat_at_zero():
    problem = diagonal_problem([[2.0, 3.0]], [[0.0, 0.0]], alpha=10.0)
    np.testing.assert_array_equal(problem.client_gradient(0, np.zeros(2)), np.zeros(2))


def test_check_point_and_client_reject_bad_input(small_problem):
    with pytest.raises(InvalidInputError):
        small_problem.full_gradient(np.zeros(small_problem.dim + 1))
    with pytest.raises(InvalidInputError):
        small_problem.client_gradient(small_problem.n, np.zeros(small_problem.dim))
    with pytest.raises(InvalidInputError):
        small_problem.oracle_query(-1, np.zeros(small_problem.dim))


def test_params_validation():
    with pytest.raises(InvalidInputError):
        QuadLogSumParams(alpha=0.0)
    with pytest.raises(InvalidInputError):
        QuadLogSumParams(noise_range=(5.0, 1.0))
    with pytest.raises(InvalidInputError):
        QuadLogSumParams.from_dict({"n": 4, "colour": "blue"})
    params = QuadLogSumParams.from_dict({"n": 4, "d": 3, "clip_range": [1, 50]})
    assert params.clip_range == (1, 50)


# ─── Constants ─────────────────────────────────────────────
def test_quadratic_constants_by_hand():
    curv = np.array([[1.0, 4.0], [3.0, 2.0]])
    problem = diagonal_problem(curv, np.zeros((2, 2)))
    c = quadratic_constants(problem)
    # mean diagonal (2, 3): deviations of client 0 are (1, -1)
    assert c.delta1 == pytest.approx(1.0)
    assert c.delta == pytest.approx(1.0)
    assert c.l1 == pytest.approx(4.0)
    assert c.lmax == pytest.approx(4.0)
    assert c.delta_max == pytest.approx(1.0)


@given(st.integers(min_value=0, max_value=2**31 - 1))
def test_secant_estimates_stay_below_exact_constants(seed):
    problem = gen_quadratic_logsum(QuadLogSumParams(n=4, d=3, b=2, alpha=2.0), seed=5)
    exact = quadratic_constants(problem)
    rng = np.random.default_rng(seed)
    x, y = rng.uniform(-3, 3, 3), rng.uniform(-3, 3, 3)
    if np.allclose(x, y):
        return
    sample = estimate_constants(problem, x, y)
    assert sample.delta1 <= exact.delta1 * (1 + 1e-9) + 1e-12
    assert sample.delta <= exact.delta * (1 + 1e-9) + 1e-12
    assert sample.delta_max <= exact.delta_max * (1 + 1e-9) + 1e-12


def test_delta_sample_bounded_by_brute_force_spectrum():
    problem = gen_quadratic_logsum(QuadLogSumParams(n=4, d=3, b=2), seed=2)
    curv = np.stack([c.curvature for c in problem.clients])
    dev = curv.mean(axis=0) - curv
    # largest eigenvalue of (1/n) sum_i D_i^2 for diagonal D_i
    spectral = math.sqrt(float(np.linalg.eigvalsh(np.diag((dev ** 2).mean(axis=0))).max()))
    rng = np.random.default_rng(0)
    for _ in range(20):
        sample = estimate_constants(problem, rng.uniform(1, 2, 3), rng.uniform(-2, -1, 3))
        assert sample.delta <= spectral * (1 + 1e-9)
    assert quadratic_constants(problem).delta == pytest.approx(spectral)


def test_estimate_constants_needs_distinct_points(small_problem):
    x = np.ones(small_problem.dim)
    with pytest.raises(DegenerateInputError):
        estimate_constants(small_problem, x, x.copy())


def test_tracker_keeps_running_maxima(small_problem):
    tracker = ConstantTracker()
    with pytest.raises(DegenerateInputError):
        tracker.as_constants()
    sampled = sample_constants(small_problem, np.random.default_rng(0), pairs=8)
    assert sampled.l1 > 0
    assert sampled.lmax >= sampled.l1


def test_participation_factor_and_delta_m():
    assert participation_factor(1, 1) == 0.0
    assert participation_factor(10, 10) == 0.0
    assert participation_factor(10, 1) == 1.0
    c = SimilarityConstants(delta=2.0, delta1=1.0, l1=3.0)
    assert c.delta_m(10, 10) == 0.0
    assert c.delta_m(10, 1) == pytest.approx(2.0)
    with pytest.raises(InvalidInputError):
        SimilarityConstants(delta=-1.0, delta1=0.0, l1=1.0)


# ─── Logistic ──────────────────────────────────────────────
def test_logistic_mean_equals_global_loss_plus_regularizer():
    data = _toy_dataset()
    problem = gen_logistic_nonconvex(data, n=4, alpha=0.3)
    x = np.linspace(-1, 1, 6)
    margins = data.labels * (data.features @ x)
    expected = np.mean(np.log1p(np.exp(-margins))) + 0.3 * np.sum(x ** 2 / (1 + x ** 2))
    assert problem.full_objective(x) == pytest.approx(expected, rel=1e-12)
    assert problem.lower_bound_hint == 0.0


def test_logistic_gradient_matches_finite_differences():
    problem = gen_logistic_nonconvex(_toy_dataset(), n=3, alpha=0.1)
    x = np.linspace(-0.5, 0.5, 6)
    for i in range(problem.n):
        numeric = _numeric_gradient(lambda z: problem.client_value(i, z), x)
        np.testing.assert_allclose(problem.client_gradient(i, x), numeric, rtol=1e-5, atol=1e-7)


def test_logistic_input_errors():
    data = _toy_dataset(rows=5)
    with pytest.raises(InvalidInputError):
        gen_logistic_nonconvex(data, n=6, alpha=0.1)
    with pytest.raises(InvalidInputError):
        gen_logistic_nonconvex(data, n=2, alpha=0.1, split="striped")
    bad = LibsvmDataset(features=data.features, labels=np.array([1.0, 0.0, 1.0, -1.0, 1.0]))
    with pytest.raises(DataError):
        gen_logistic_nonconvex(bad, n=2, alpha=0.1)


def test_dirichlet_split_covers_every_row_once():
    data = _toy_dataset(rows=400)
    problem = gen_logistic_nonconvex(data, n=2, alpha=0.1, split="dirichlet", dirichlet_alpha=100.0, seed=4)
    assert sum(problem.metadata["shard_sizes"]) == 400
