from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import poisson

from causal_density import (CausalModel, CountGrid, Dataset, Field, Grid2D, ModelConfig, apply_fisher_metric,
                            bin_data, expected_counts, integrate, log_likelihood, make_grid, poisson_problem)

DEFAULT = Grid2D(make_grid(90, 0.0, 1.0), make_grid(128, 3.8, 0.04))


def test_binning_examples():
    cg = bin_data(Dataset([0.5, 0.5], [3.82, 3.82]), DEFAULT)
    assert cg.counts[0, 0] == 2 and cg.total == 2 and cg.discarded == 0
    cg = bin_data(Dataset([0.5], [3.79]), DEFAULT)
    assert cg.total == 0 and cg.discarded == 1


def test_binning_edges():
    g = Grid2D(make_grid(2, 0.0, 1.0), make_grid(2, 0.0, 1.0))
    cg = bin_data(np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 0.5], [0.999, 1.999]]), g)
    # left edges are inside, the right edge of the last pixel is outside
    assert cg.counts.tolist() == [[1, 1], [0, 1]]
    assert cg.discarded == 1


def test_binning_conservation():
    r = np.random.default_rng(0)
    pts = np.column_stack([r.uniform(-10, 100, 10_000), r.uniform(3.0, 9.5, 10_000)])
    cg = bin_data(pts, DEFAULT)
    assert cg.total + cg.discarded == 10_000


@given(seed=st.integers(0, 2**32 - 1))
def test_binning_order_invariant(seed):
    r = np.random.default_rng(seed)
    pts = np.column_stack([r.uniform(0, 90, 200), r.uniform(3.8, 8.9, 200)])
    a = bin_data(pts, DEFAULT).counts
    b = bin_data(pts[r.permutation(200)], DEFAULT).counts
    assert np.array_equal(a, b)


def test_expected_counts_examples():
    grid = Grid2D(make_grid(3, 0.0, 1.0), make_grid(4, 0.0, 0.04))
    lam = expected_counts(np.ones(grid.shape), grid).lam
    np.testing.assert_allclose(lam, 0.04)
    np.testing.assert_allclose(expected_counts(2 * np.ones(grid.shape), grid).lam, 2 * lam)
    rho = np.random.default_rng(1).uniform(0.1, 5, grid.shape)
    assert integrate(Field(grid, rho)) == pytest.approx(expected_counts(rho, grid).lam.sum(), abs=1e-12)


def test_log_likelihood_examples():
    assert log_likelihood(np.ones((2, 2)), np.zeros((2, 2), int)) == pytest.approx(-4.0)
    # 3 ln 2 - 2 - ln 6, evaluated in high precision
    assert log_likelihood(np.array([2.0]), np.array([3])) == pytest.approx(-1.71231792754821907256078099401,
                                                                          abs=1e-14)


def test_log_likelihood_pmf_product():
    r = np.random.default_rng(2)
    lam = r.uniform(0.1, 4, (3, 4))
    n = r.poisson(lam)
    brute = math.log(float(np.prod(poisson.pmf(n, lam))))
    assert log_likelihood(lam, n) == pytest.approx(brute, abs=1e-12)


def test_log_likelihood_errors():
    with pytest.raises(ArithmeticError):
        log_likelihood(np.array([0.0, 1.0]), np.array([0, 1]))
    with pytest.raises(ValueError):
        log_likelihood(np.ones(3), np.ones(2, int))


def test_count_grid_validation():
    g = Grid2D(make_grid(2, 0, 1), make_grid(2, 0, 1))
    with pytest.raises(ValueError):
        CountGrid(g, -np.ones((2, 2)))
    with pytest.raises(ValueError):
        CountGrid(g, np.ones((3, 2)))


@pytest.fixture
def toy_problem():
    grid = Grid2D(make_grid(4, 0.0, 1.0), make_grid(4, 0.0, 0.25))
    model = CausalModel(ModelConfig("XtoY", grid, rho0=10.0))
    r = np.random.default_rng(3)
    xi = 0.3 * r.standard_normal(model.dim)
    counts = r.poisson(model.expected_counts(xi))
    return poisson_problem(model, counts), xi


def test_metric_linear_and_spd(toy_problem):
    problem, xi = toy_problem
    assert np.all(apply_fisher_metric(problem, xi, np.zeros(problem.dim)) == 0)
    r = np.random.default_rng(4)
    for _ in range(100):
        v = r.standard_normal(problem.dim)
        assert v @ apply_fisher_metric(problem, xi, v) > 0
    with pytest.raises(ValueError):
        apply_fisher_metric(problem, xi, np.zeros(problem.dim + 1))


def test_metric_dense_symmetric_and_gauss_newton(toy_problem):
    problem, xi = toy_problem
    D = problem.dim
    M = np.column_stack([apply_fisher_metric(problem, xi, e) for e in np.eye(D)])
    assert np.max(np.abs(M - M.T)) <= 1e-8 * max(1.0, np.max(np.abs(M)))
    # J^T diag(1/lambda) J + 1 from an explicitly assembled Jacobian
    lam, jvp, _ = problem.response.linearize(xi)
    J = np.column_stack([np.ravel(jvp(e)) for e in np.eye(D)])
    gn = J.T @ (J / np.ravel(lam)[:, None]) + np.eye(D)
    np.testing.assert_allclose(M, gn, atol=1e-9)


def test_gradient_matches_differences(toy_problem):
    problem, xi = toy_problem
    g = problem.at(xi).gradient
    r = np.random.default_rng(5)
    eps = 1e-5
    for _ in range(20):
        v = r.standard_normal(problem.dim)
        fd = (problem.energy(xi + eps * v) - problem.energy(xi - eps * v)) / (2 * eps)
        assert abs(fd - g @ v) <= 1e-4 * max(1.0, abs(fd))


def test_counts_shape_checked():
    grid = Grid2D(make_grid(4, 0.0, 1.0), make_grid(3, 0.0, 1.0))
    model = CausalModel(ModelConfig("XtoY", grid, rho0=1.0))
    with pytest.raises(ValueError):
        poisson_problem(model, np.zeros((3, 4)))
