from __future__ import annotations

import numpy as np
import pytest

from causal_density import (MKDE_AXIS_PRIOR, InferenceConfig, LogNormal, MkdeModel, make_grid, mkde_density,
                            mkde_fit, mkde_marginal)
from causal_density.likelihood import CountGrid
from causal_density.matern import AxisPrior
from causal_density.mkde import load_counts_nd, mkde_problem, save_counts_nd

FAST = InferenceConfig(n_samples=4, n_global_iterations=4, optimizer_steps=6, cg_tolerance=1e-4, seed=3)


def test_defaults():
    m = MkdeModel([make_grid(10, 0, 1), make_grid(5, 0, 2)])
    assert m.priors == (MKDE_AXIS_PRIOR, MKDE_AXIS_PRIOR)
    assert m.shape == (10, 5) and m.ndim == 2 and m.volume == pytest.approx(100.0)
    with pytest.raises(ValueError):
        MkdeModel([])
    with pytest.raises(ValueError):
        MkdeModel([make_grid(4, 0, 1)], priors=(MKDE_AXIS_PRIOR, MKDE_AXIS_PRIOR))


def test_one_dimensional_bump():
    g = make_grid(64, 0.0, 1 / 64)
    r = np.random.default_rng(0)
    pts = r.normal(0.4, 0.08, 5000)
    counts, _ = np.histogram(pts, bins=g.edges)
    post = mkde_fit(counts, MkdeModel([g]), FAST)
    mean, sd = mkde_density(post)
    # the peak pixel is the one holding 0.4 or its neighbour
    assert abs(int(np.argmax(mean)) - int(0.4 // g.step)) <= 1
    assert np.all(mean > 0) and np.all(sd > 0)


@pytest.fixture(scope="module")
def fit2d():
    grids = [make_grid(12, 0.0, 0.5), make_grid(10, -1.0, 0.2)]
    r = np.random.default_rng(1)
    x, y = r.normal(3, 1, 2000), r.normal(0, 0.4, 2000)
    counts, _, _ = np.histogram2d(x, y, bins=[grids[0].edges, grids[1].edges])
    return grids, counts.astype(int), mkde_fit(counts.astype(int), MkdeModel(grids), FAST)


def test_marginal_over_all_axes_is_total_mass(fit2d):
    grids, counts, post = fit2d
    total, sd = mkde_marginal(post, (0, 1))
    mean, _ = mkde_density(post)
    assert total.shape == ()
    assert float(total) == pytest.approx(float(mean.sum() * grids[0].step * grids[1].step), rel=1e-12)
    # the posterior mass tracks the observed number of in-grid events
    assert abs(float(total) - counts.sum()) <= 3 * float(sd) + 0.05 * counts.sum()


def test_marginal_shapes_and_errors(fit2d):
    grids, _, post = fit2d
    m0, s0 = mkde_marginal(post, [0])
    m1, _ = mkde_marginal(post, [1])
    assert m0.shape == (10,) and m1.shape == (12,)
    assert m0.sum() * grids[1].step == pytest.approx(m1.sum() * grids[0].step, rel=1e-12)
    with pytest.raises(ValueError):
        mkde_marginal(post, [])
    with pytest.raises(ValueError):
        mkde_marginal(post, [2])


def test_axis_order_symmetry(fit2d):
    # permuting the axes together with the latent layout permutes the density
    grids, counts, _ = fit2d
    a, b = MkdeModel(grids), MkdeModel(grids[::-1])
    pa, pb = mkde_problem(counts, a), mkde_problem(counts.T.copy(), b)
    r = np.random.default_rng(4)
    field_shape = pa.response.op.shape
    xf, hyper = r.standard_normal(field_shape), 0.3 * r.standard_normal(7)
    xa = np.concatenate([xf.ravel(), hyper])
    xb = np.concatenate([xf.T.ravel(), hyper[3:6], hyper[0:3], hyper[6:]])
    np.testing.assert_allclose(pb.response.density(xb), pa.response.density(xa).T, rtol=1e-12)
    assert pb.energy(xb) == pytest.approx(pa.energy(xa), rel=1e-12)


def test_zero_counts_stay_near_prior():
    g = make_grid(16, 0.0, 1.0)
    problem = mkde_problem(np.zeros(16, int), MkdeModel([g]))
    assert np.isfinite(problem.energy(np.zeros(problem.dim)))
    post = mkde_fit(np.zeros(16, int), MkdeModel([g]), FAST)
    mean, _ = mkde_density(post)
    assert np.all(mean >= 0) and np.all(np.isfinite(mean))


def test_priors_follow_config():
    prior = AxisPrior(a=LogNormal(0.5, 0.1))
    m = MkdeModel([make_grid(8, 0, 1)], priors=(prior,))
    assert m.priors[0].a == LogNormal(0.5, 0.1)
    with pytest.raises(ValueError):
        mkde_problem(np.zeros(9, int), m)


def test_counts_csv_round_trip(tmp_path):
    grids = [make_grid(3, 0, 1), make_grid(4, 0, 1), make_grid(2, 0, 1)]
    n = np.random.default_rng(2).poisson(1.5, (3, 4, 2))
    save_counts_nd(CountGrid(grids, n), tmp_path / "c.csv")
    back = load_counts_nd(tmp_path / "c.csv", grids)
    assert np.array_equal(back.counts, n)
    (tmp_path / "bad.csv").write_text("i0,i1,i2,count\n5,0,0,1\n")
    with pytest.raises(ValueError):
        load_counts_nd(tmp_path / "bad.csv", grids)
