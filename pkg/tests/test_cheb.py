import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from aghfplan import InvalidDegree, OutOfDomain
from aghfplan.cheb import ChebGrid, cheb_nodes, diff_matrix, interpolate, quadrature_weights


def test_node_examples():
    assert np.array_equal(cheb_nodes(1), [-1.0, 1.0])
    assert np.allclose(cheb_nodes(2), [-1.0, 0.0, 1.0], atol=1e-16)
    assert abs(cheb_nodes(4)[1] + np.sqrt(2) / 2) < 1e-15


@pytest.mark.parametrize("p", [1, 2, 3, 8, 17, 40])
def test_node_invariants(p):
    x = cheb_nodes(p)
    assert x[0] == -1.0 and x[-1] == 1.0
    assert np.all(np.diff(x) > 0)
    assert np.allclose(x, -np.cos(np.pi * np.arange(p + 1) / p), atol=1e-15)


@pytest.mark.parametrize("bad", [0, -3, 2.5])
def test_invalid_degree(bad):
    for fn in (cheb_nodes, diff_matrix, quadrature_weights):
        with pytest.raises(InvalidDegree):
            fn(bad)
    with pytest.raises(InvalidDegree):
        ChebGrid(bad, 1.0)


def test_diff_matrix_p1():
    assert np.allclose(diff_matrix(1), [[-0.5, 0.5], [-0.5, 0.5]], atol=1e-15)


@pytest.mark.parametrize("p", [2, 5, 10, 20])
def test_diff_matrix_constant_rows(p):
    D = diff_matrix(p)
    assert np.abs(D @ np.full(p + 1, 3.7)).max() < 1e-12
    assert np.abs(D.sum(axis=1)).max() < 1e-10


def test_diff_matrix_t7_example():
    x = cheb_nodes(10)
    assert np.abs(diff_matrix(10) @ x ** 7 - 7 * x ** 6).max() < 1e-10


@pytest.mark.parametrize("p", [1, 4, 9, 16, 24])
def test_diff_matrix_exact_on_monomials(p):
    x = cheb_nodes(p)
    D = diff_matrix(p)
    for d in range(p + 1):
        f = x ** d
        df = d * x ** (d - 1) if d else np.zeros_like(x)
        assert np.abs(D @ f - df).max() / (1 + np.abs(df).max()) < 1e-10


@pytest.mark.parametrize("p", [3, 8, 15])
def test_second_derivative_on_monomials(p):
    g = ChebGrid(p, 2.0)
    x = g.nodes
    assert np.allclose(g.D2, g.D @ g.D, atol=0)
    for d in range(p + 1):
        d2 = d * (d - 1) * x ** (d - 2) if d > 1 else np.zeros_like(x)
        assert np.abs(g.D2 @ x ** d - d2).max() / (1 + np.abs(d2).max()) < 1e-8


def test_spectral_accuracy():
    # the degree-30 interpolant itself has derivative error ~1e-7 for this f,
    # so the 1e-8 level is reached at p = 34
    from numpy.polynomial import chebyshev as C
    errs = {}
    for p in (10, 20, 30, 34):
        x = cheb_nodes(p)
        f = np.exp(np.sin(3 * x))
        df = 3 * np.cos(3 * x) * f
        errs[p] = np.abs(diff_matrix(p) @ f - df).max()
        ref = C.chebval(x, C.chebder(C.chebfit(x, f, p)))
        assert np.abs(diff_matrix(p) @ f - ref).max() < 1e-9
    assert errs[30] < 1e-7
    assert errs[34] < 1e-8
    assert errs[34] < errs[30] < errs[20] < errs[10]


def test_quadrature_examples():
    assert np.allclose(quadrature_weights(1), [1.0, 1.0], atol=1e-15)
    x = cheb_nodes(4)
    assert abs(quadrature_weights(4) @ x ** 2 - 2 / 3) < 1e-12


@pytest.mark.parametrize("p", range(1, 31))
def test_quadrature_sum_and_exactness(p):
    w = quadrature_weights(p)
    assert abs(w.sum() - 2) < 1e-12
    assert np.all(w > 0)
    x = cheb_nodes(p)
    for d in range(p + 1):
        exact = 0.0 if d % 2 else 2.0 / (d + 1)
        assert abs(w @ x ** d - exact) < 1e-12


def test_interpolate_examples():
    assert interpolate(np.array([1.0, 3.0]), 0.0) == pytest.approx(2.0, abs=1e-15)
    vals = np.arange(7.0) ** 2
    x = cheb_nodes(6)
    for i, xi in enumerate(x):
        assert interpolate(vals, xi) == vals[i]


def test_interpolate_cubic_reproduction(rng):
    x = cheb_nodes(5)
    t = rng.uniform(-1, 1, 100)
    assert np.abs(interpolate(x ** 3, t) - t ** 3).max() < 1e-12


@pytest.mark.parametrize("p", [2, 7, 14, 25])
def test_interpolate_polynomial_reproduction(p, rng):
    coef = rng.normal(size=p + 1)
    x = cheb_nodes(p)
    t = np.concatenate((rng.uniform(-1, 1, 200), [-1.0, 1.0]))
    got = interpolate(np.polyval(coef, x), t)
    want = np.polyval(coef, t)
    assert np.abs(got - want).max() / (1 + np.abs(want).max()) < 1e-12


def test_interpolate_matrix_values(rng):
    x = cheb_nodes(6)
    vals = np.column_stack((x ** 2, np.sin(x), 1 + 0 * x))
    t = rng.uniform(-1, 1, 9)
    out = interpolate(vals, t)
    assert out.shape == (9, 3)
    for j in range(3):
        assert np.allclose(out[:, j], interpolate(vals[:, j], t), atol=1e-15)


@pytest.mark.parametrize("t", [1.0 + 1e-9, -1.5, np.nan])
def test_interpolate_out_of_domain(t):
    with pytest.raises(OutOfDomain):
        interpolate(np.ones(4), t)


def test_interpolate_tolerates_boundary_roundoff():
    assert interpolate(np.array([1.0, 5.0]), 1.0 + 5e-13) == pytest.approx(5.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.floats(0.1, 50.0))
def test_grid_time_map(p, T):
    g = ChebGrid(p, T)
    assert g.times[0] == 0.0 and abs(g.times[-1] - T) < 1e-12 * T
    assert np.allclose(g.to_tau(g.times), g.nodes, atol=1e-12)
    assert g.time_scale == pytest.approx(2.0 / T)


def test_physical_derivatives_against_fd():
    T = 3.7
    g = ChebGrid(28, T)
    t = g.times
    f = np.sin(1.3 * t) * np.exp(0.2 * t)
    h = 1e-5

    def dense(s):
        return g.interpolate(f, np.clip(s, 0, T))

    inner = slice(1, -1)
    fd1 = (dense(t[inner] + h) - dense(t[inner] - h)) / (2 * h)
    fd2 = (dense(t[inner] + h) - 2 * f[inner] + dense(t[inner] - h)) / h ** 2
    d1 = (g.D_phys @ f)[inner]
    d2 = (g.D2_phys @ f)[inner]
    assert np.abs(d1 - fd1).max() / np.abs(fd1).max() < 1e-6
    assert np.abs(d2 - fd2).max() / np.abs(fd2).max() < 1e-4
    exact = 1.3 * np.cos(1.3 * t) * np.exp(0.2 * t) + 0.2 * f
    assert np.abs(g.D_phys @ f - exact).max() < 1e-8


def test_grid_integrate():
    g = ChebGrid(12, 4.0)
    assert g.integrate(g.times ** 3) == pytest.approx(4.0 ** 4 / 4, rel=1e-12)
    vec = g.integrate(np.column_stack((np.ones(13), g.times)))
    assert np.allclose(vec, [4.0, 8.0], rtol=1e-12)


def test_grid_rejects_bad_horizon():
    for T in (0.0, -1.0, np.inf):
        with pytest.raises(ValueError):
            ChebGrid(4, T)
