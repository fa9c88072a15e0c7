from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from causal_density import Field, Grid2D, harmonic_analyze, harmonic_synthesize, integrate, make_grid, mode_set
from causal_density.grid import harmonic_k, hartley, synthesize, synthesize_adjoint


def test_default_axes():
    gx = make_grid(90, 0.0, 1.0, 2.0)
    gy = make_grid(128, 3.8, 0.04, 2.0)
    assert gx.n_padded >= 180 and gx.n_padded == 180
    assert gy.n_padded == 256
    assert gy.start == 3.8
    assert gy.stop == pytest.approx(3.8 + 5.12)
    assert Grid2D(gx, gy).size == 90 * 128


def test_minimal_grid_without_padding():
    g = make_grid(2, 0.0, 1.0, 1.0)
    assert g.n_padded == 2
    np.testing.assert_allclose(g.centers, [0.5, 1.5])


@pytest.mark.parametrize("args", [(1, 0.0, 1.0, 2.0), (10, 0.0, 0.0, 2.0), (10, 0.0, -1.0, 2.0), (10, 0.0, 1.0, 0.5)])
def test_invalid_grids(args):
    with pytest.raises(ValueError):
        make_grid(*args)


def test_pixel_centres():
    g = make_grid(4, 2.0, 0.5, 1.0)
    np.testing.assert_allclose(g.centers, 2.0 + (np.arange(4) + 0.5) * 0.5)
    np.testing.assert_allclose(g.edges, 2.0 + np.arange(5) * 0.5)


def test_mode_set_small():
    ms = mode_set(make_grid(4, 0.0, 1.0, 1.0))
    np.testing.assert_allclose(ms.k, [0.0, 0.25, 0.5])
    assert ms.volume_factor == pytest.approx(0.25)


def test_mode_set_lowest_frequency():
    ms = mode_set(make_grid(90, 0.0, 1.0, 2.0))
    assert ms.k[1] == pytest.approx(1 / 180)
    assert np.count_nonzero(ms.k == 0) == 1


@given(n=st.integers(2, 60), pad=st.floats(1.0, 3.0))
def test_single_zero_mode(n, pad):
    g = make_grid(n, 0.0, 1.0, pad)
    assert g.n_padded >= n * pad - 1e-9
    assert np.count_nonzero(mode_set(g).k == 0) == 1
    assert np.count_nonzero(harmonic_k(g) == 0) == 1


def test_zero_and_dc_synthesis():
    grid = Grid2D(make_grid(6, 0.0, 1.0), make_grid(5, 0.0, 1.0))
    shape = (grid.gx.n_padded, grid.gy.n_padded)
    assert np.all(harmonic_synthesize(np.zeros(shape), grid).values == 0)
    c = np.zeros(shape)
    c[0, 0] = 1.7
    np.testing.assert_allclose(harmonic_synthesize(c, grid).values, 1.7, rtol=1e-14)


def test_round_trip_unpadded(rng):
    grid = Grid2D(make_grid(8, 0.0, 1.0, 1.0), make_grid(6, 0.0, 1.0, 1.0))
    c = rng.standard_normal((8, 6))
    back = harmonic_analyze(harmonic_synthesize(c, grid))
    assert np.max(np.abs(back - c)) <= 1e-12


def test_analysis_needs_unpadded():
    g = make_grid(8, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        harmonic_analyze(Field(g, np.zeros(8)))


def test_mode_count_mismatch():
    g = make_grid(8, 0.0, 1.0, 2.0)
    with pytest.raises(ValueError):
        harmonic_synthesize(np.zeros(8), g)


def test_hartley_involution(rng):
    c = rng.standard_normal((5, 7))
    np.testing.assert_allclose(hartley(hartley(c)), c.size * c, atol=1e-12)


def test_synthesis_adjoint(rng):
    grid = Grid2D(make_grid(7, 0.0, 1.0), make_grid(5, 0.0, 1.0))
    c = rng.standard_normal((grid.gx.n_padded, grid.gy.n_padded))
    u = rng.standard_normal(grid.shape)
    lhs = float(np.sum(synthesize(c, grid) * u))
    rhs = float(np.sum(c * synthesize_adjoint(u, grid)))
    assert lhs == pytest.approx(rhs, rel=1e-12)


@given(a=st.floats(-5, 5), b=st.floats(-5, 5), seed=st.integers(0, 2**32 - 1))
def test_synthesis_linear(a, b, seed):
    g = make_grid(9, 0.0, 1.0)
    r = np.random.default_rng(seed)
    c1, c2 = r.standard_normal(g.n_padded), r.standard_normal(g.n_padded)
    lhs = harmonic_synthesize(a * c1 + b * c2, g).values
    rhs = a * harmonic_synthesize(c1, g).values + b * harmonic_synthesize(c2, g).values
    scale = max(1.0, float(np.max(np.abs(rhs))))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * scale


def test_integrate_examples():
    g = make_grid(10, 0.0, 0.5)
    assert integrate(Field(g, np.ones(10))) == pytest.approx(5.0)
    assert integrate(Field(g, np.zeros(10))) == 0.0
    h = make_grid(1000, 0.0, 1e-3)
    assert abs(integrate(Field(h, np.exp(h.centers))) - (np.e - 1)) < 1e-3
    # midpoint sum, evaluated independently in high precision
    assert integrate(Field(h, np.exp(h.centers))) == pytest.approx(1.71828175686397113775640303783, rel=1e-13)


def test_integrate_2d():
    grid = Grid2D(make_grid(4, 0.0, 0.5), make_grid(3, 0.0, 2.0))
    assert integrate(Field(grid, np.ones(grid.shape))) == pytest.approx(2.0 * 6.0)


@given(seed=st.integers(0, 2**32 - 1))
def test_integrate_additive(seed):
    r = np.random.default_rng(seed)
    g = make_grid(17, 0.0, 0.3)
    a, b = r.standard_normal(17), r.standard_normal(17)
    total = integrate(Field(g, a + b))
    assert total == pytest.approx(integrate(Field(g, a)) + integrate(Field(g, b)), abs=1e-12)


def test_field_validation():
    g = make_grid(4, 0.0, 1.0)
    with pytest.raises(ValueError):
        Field(g, np.zeros(5))
    with pytest.raises(ValueError):
        Field(g, np.array([0.0, np.nan, 0.0, 0.0]))


def test_seeded_fields_identical():
    g = make_grid(30, 0.0, 1.0)
    a = harmonic_synthesize(np.random.default_rng(7).standard_normal(g.n_padded), g).values
    b = harmonic_synthesize(np.random.default_rng(7).standard_normal(g.n_padded), g).values
    assert a.tobytes() == b.tobytes()
