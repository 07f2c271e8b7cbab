import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerkit.exterior import FormError, PQForm, wedge
from kahlerkit.manifold.calculus import (PoissonError, d_antiholo, d_holo, flat_metric, integrate,
                                         integrate_volume, laplacian, metric_from_potential, reference_metric,
                                         solve_poisson, volume)
from kahlerkit.manifold.fields import PositivityError, ScalarField
from kahlerkit.manifold.fubini_study import fubini_study
from kahlerkit.manifold.grids import ChartGrid, GridError, TorusGrid, make_grid


# --- grids ----------------------------------------------------------------

def test_grid_validation():
    with pytest.raises(GridError):
        TorusGrid(3, 16)
    with pytest.raises(GridError):
        TorusGrid(1, 30)
    with pytest.raises(GridError):
        ChartGrid(32, 63)
    assert make_grid("cp1", n_theta=16, n_lam=32).shape == (16, 32)
    assert make_grid("torus", m=2, N=8).shape == (8, 8, 8, 8)


# --- differentiation -------------------------------------------------------

def test_holomorphic_derivative_of_exponential():
    grid = TorusGrid(1, 32)
    x, y = grid.coords()
    f = np.exp(2j * np.pi * x)
    assert np.max(np.abs(grid.d_holo(f, 0) - np.pi * 1j * f)) < 1e-12
    assert np.max(np.abs(grid.d_antiholo(f, 0) - np.pi * 1j * f)) < 1e-12


def test_derivative_of_constant_is_zero(flat2):
    c = np.full(flat2.grid.shape, 3.5)
    assert np.max(np.abs(d_holo(c, flat2.grid))) < 1e-13
    assert np.max(np.abs(d_antiholo(c, flat2.grid))) < 1e-13


def test_chart_derivative_of_modulus_squared(fs1):
    grid = fs1.grid
    z = grid.z()
    # on the cylinder chart w = log z:  d|z|^2/dw = z * zbar = |z|^2
    f = np.abs(z) ** 2 / (1 + np.abs(z) ** 2)  # smooth on the sphere
    expected = np.abs(z) ** 2 / (1 + np.abs(z) ** 2) ** 2
    assert np.max(np.abs(grid.d_holo(f) - expected)) < 1e-9


# --- metric from potential ------------------------------------------------

def test_zero_potential_returns_base(flat1):
    g = metric_from_potential(flat1, np.zeros(flat1.grid.shape))
    assert np.array_equal(g.G, flat1.G)


def test_cosine_potential_metric(flat1):
    eps = 0.01
    x, _ = flat1.grid.coords()
    g = metric_from_potential(flat1, eps * np.cos(2 * np.pi * x))
    base = flat1.G[0, 0]
    hess = flat1.grid.hessian(eps * np.cos(2 * np.pi * x))[0, 0]
    assert np.max(np.abs(hess + eps * np.pi ** 2 * np.cos(2 * np.pi * x))) < 1e-12
    assert np.max(np.abs(g.G[0, 0] - (base - eps * np.pi ** 2 * np.cos(2 * np.pi * x)))) < 1e-12


def test_positivity_rejection(flat1):
    x, _ = flat1.grid.coords()
    eps = 2.0 * float(np.real(flat1.G[0, 0].max())) / np.pi ** 2
    with pytest.raises(PositivityError) as exc:
        metric_from_potential(flat1, eps * np.cos(2 * np.pi * x))
    assert exc.value.min_eig < 0


# --- integration ----------------------------------------------------------

def test_flat_integral_of_i_dz_dzbar():
    grid = TorusGrid(1, 16)
    form = PQForm.basis_form(1, (0,), (0,), 1j * np.ones(grid.shape))
    assert integrate(form, grid) == pytest.approx(2.0, abs=1e-14)


def test_integrate_rejects_wrong_degree():
    grid = TorusGrid(1, 16)
    with pytest.raises(FormError):
        integrate(PQForm.zeros(1, 1, 0, grid.shape), grid)


def test_exact_form_integrates_to_zero(rng):
    grid = TorusGrid(1, 32)
    u = grid.random_potential(rng, 1.0) + 1j * grid.random_potential(rng, 1.0)
    top = PQForm.basis_form(1, (0,), (0,), grid.d_antiholo(u, 0))  # dbar(u dz) up to sign
    assert abs(integrate(top, grid)) < 1e-12


def test_integration_by_parts(rng):
    grid = TorusGrid(2, 16)
    u = grid.random_potential(rng, 1.0)
    b = grid.random_potential(rng, 1.0) + 1j * grid.random_potential(rng, 1.0)
    # int d_1 u * b = - int u * d_1 b
    lhs = grid.integrate_coordinate(grid.d_holo(u, 0) * b)
    rhs = -grid.integrate_coordinate(u * grid.d_holo(b, 0))
    assert abs(lhs - rhs) < 1e-10


def test_fubini_study_volume(fs1):
    assert volume(fs1) == pytest.approx(1.0, abs=1e-12)


def test_chart_quadrature_improves_with_resolution():
    errs = []
    for n in (8, 16, 32):
        g = reference_metric(ChartGrid(n, 2 * n))
        X, Y, Z = g.grid.cartesian()
        f = np.exp(Z) * (1 + X ** 2)
        errs.append(float(np.real(integrate_volume(f, g))))
    assert abs(errs[2] - errs[1]) < abs(errs[1] - errs[0])


# --- Poisson ---------------------------------------------------------------

def test_poisson_zero_rhs(flat1):
    assert np.all(solve_poisson(np.zeros(flat1.grid.shape), flat1).values == 0)


def test_poisson_cosine(flat1):
    x, _ = flat1.grid.coords()
    rhs = np.cos(2 * np.pi * x)
    u = solve_poisson(rhs, flat1).values
    # Lap = g^{-1} d dbar and d dbar cos(2 pi x) = -pi^2 cos(2 pi x)
    scale = float(np.real(flat1.G[0, 0].flat[0]))
    assert np.max(np.abs(u + scale * np.cos(2 * np.pi * x) / np.pi ** 2)) < 1e-12


def test_poisson_unit_metric_value():
    grid = TorusGrid(1, 16)
    G = np.ones((1, 1) + grid.shape, complex)
    from kahlerkit.manifold.fields import MetricField

    g = MetricField(grid, G, rel=G / grid.ref_frame()[0])
    x, _ = grid.coords()
    u = solve_poisson(np.cos(2 * np.pi * x), g).values
    assert np.max(np.abs(u + np.cos(2 * np.pi * x) / np.pi ** 2)) < 1e-12


def test_poisson_rejects_nonzero_mean(flat1):
    with pytest.raises(ValueError):
        solve_poisson(np.ones(flat1.grid.shape), flat1)


@pytest.mark.parametrize("which", ["torus1", "torus2", "cp1"])
def test_poisson_manufactured_solution(which, rng, flat1, flat2, fs1):
    g0 = {"torus1": flat1, "torus2": flat2, "cp1": fs1}[which]
    g = metric_from_potential(g0, g0.grid.random_potential(rng, 0.003))
    u0 = g0.grid.random_potential(rng, 1.0)
    u0 = u0 - integrate_volume(u0, g).real / volume(g)
    u = solve_poisson(laplacian(u0, g), g).values
    assert np.max(np.abs(u - u0)) < 1e-8


@settings(max_examples=10, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_poisson_inverts_laplacian(seed, flat1):
    rng = np.random.default_rng(seed)
    g = metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005))
    u0 = flat1.grid.random_potential(rng, 1.0)
    u0 = u0 - integrate_volume(u0, g).real / volume(g)
    assert np.max(np.abs(solve_poisson(laplacian(u0, g), g).values - u0)) < 1e-8


# --- Fubini-Study -----------------------------------------------------------

def test_fubini_study_at_origin():
    G, _ = fubini_study(1, np.zeros((1, 1)))
    assert G[0, 0, 0] == pytest.approx(1 / (2 * np.pi), abs=1e-15)


def test_fubini_study_cp2_grid():
    g, theta = fubini_study(2)
    assert g.m == 2
    assert volume(g) == pytest.approx(1.0, abs=1e-12)


def test_fubini_study_rejects_dimension():
    with pytest.raises(ValueError):
        fubini_study(3)


def test_real_scalar_field_flag():
    grid = TorusGrid(1, 8)
    with pytest.raises(ValueError):
        ScalarField(grid, 1j * np.ones(grid.shape), real=True)
    f = ScalarField(grid, np.ones(grid.shape) + 1e-20j, real=True)
    assert f.values.dtype == float
