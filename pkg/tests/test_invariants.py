import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerkit.curvature import curvature
from kahlerkit.invariants import (InvariantError, KahlerPath, bando_f1_via_potential, bando_total,
                                  character_report, gradient_field, mabuchi_between, mabuchi_derivative_check,
                                  mabuchi_energy, poisson_bracket)
from kahlerkit.lichnerowicz import transport_potential
from kahlerkit.manifold.calculus import flat_metric, integrate_volume, metric_from_potential, volume
from kahlerkit.manifold.grids import TorusGrid

# grad' of the height function Z on the cylinder chart is ROTATION_CONSTANT * d/dw = ROTATION_CONSTANT * z d/dz
ROTATION_CONSTANT = 4 * np.pi
# {X, Y} = BRACKET_CONSTANT * Z for the coordinate functions of the unit sphere
BRACKET_CONSTANT = 4j * np.pi


@pytest.fixture(scope="module")
def sphere(fs1):
    return fs1.grid.cartesian()


@pytest.fixture(scope="module")
def perturbed_cp1(fs1):
    phi = fs1.grid.random_potential(np.random.default_rng(5), 0.005)
    return phi, metric_from_potential(fs1, phi)


# --- gradient fields --------------------------------------------------------

def test_gradient_of_constant(flat1):
    X = gradient_field(np.full(flat1.grid.shape, 2.0), flat1)
    assert np.max(np.abs(X.components)) == 0 and X.residual == 0 and X.accepted


def test_rotation_field_on_cp1(fs1, sphere):
    X = gradient_field(sphere[2], fs1)
    assert X.residual <= 1e-8
    assert np.max(np.abs(X.components[0] - ROTATION_CONSTANT)) < 1e-9


def test_torus_cosine_is_not_a_holomorphy_potential(flat1):
    x, _ = flat1.grid.coords()
    X = gradient_field(np.cos(2 * np.pi * x), flat1)
    assert X.residual > 1.0 and not X.accepted


# --- Poisson bracket ----------------------------------------------------------

def test_bracket_trivial_cases(fs1, sphere, rng):
    u = fs1.grid.random_potential(rng, 1.0)
    assert np.max(np.abs(poisson_bracket(u, u, fs1))) < 1e-12
    assert np.max(np.abs(poisson_bracket(u, np.full(fs1.grid.shape, 3.0), fs1))) < 1e-12


def test_bracket_of_rotation_hamiltonians(fs1, sphere):
    X, Y, Z = sphere
    for a, b, c in ((X, Y, Z), (Y, Z, X), (Z, X, Y)):
        assert np.max(np.abs(poisson_bracket(a, b, fs1) - BRACKET_CONSTANT * c)) < 1e-9


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1))
def test_bracket_antisymmetry_and_jacobi(seed):
    # nested brackets of a perturbed metric are truncation-limited: N = 64 reaches 1.4e-8 on some seeds
    flat1 = flat_metric(TorusGrid(1, 128))
    rng = np.random.default_rng(seed)
    g = metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005))
    u, v, w = (flat1.grid.random_potential(rng, 1.0, max_freq=1) for _ in range(3))
    assert np.max(np.abs(poisson_bracket(u, v, g) + poisson_bracket(v, u, g))) < 1e-12
    jac = (poisson_bracket(u, poisson_bracket(v, w, g), g) + poisson_bracket(v, poisson_bracket(w, u, g), g)
           + poisson_bracket(w, poisson_bracket(u, v, g), g))
    assert np.max(np.abs(jac)) < 1e-8


# --- characters -----------------------------------------------------------------

def test_total_character_vanishes_on_fs(fs1, sphere):
    for u in sphere:
        for t in (0.0, 0.2):
            assert abs(bando_total(u, fs1, t)) < 1e-10


def test_character_invariance_in_the_class(fs1, sphere, perturbed_cp1):
    phi, g = perturbed_cp1
    curv = curvature(g)
    for u in sphere:
        ut = transport_potential(u, phi, fs1)
        for t in (0.0, 0.2):
            assert abs(bando_total(ut, curv, t) - bando_total(u, fs1, t)) < 1e-5
        rep = character_report(ut, curv, 0.2)
        assert abs(rep["f1_potential"] - rep["f1_pairing"]) < 1e-5
        assert abs(rep["f1_potential"]) < 1e-5


def test_total_character_linear(fs1, sphere, rng):
    a, b = rng.standard_normal(2)
    X, Y, _ = sphere
    lhs = bando_total(a * X + b * Y, fs1, 0.1)
    rhs = a * bando_total(X, fs1, 0.1) + b * bando_total(Y, fs1, 0.1)
    assert abs(lhs - rhs) < 1e-10


def test_total_character_rejects_bad_potentials(fs1, flat1, sphere):
    with pytest.raises(InvariantError):
        bando_total(sphere[2] + 1.0, fs1, 0.0)
    x, _ = flat1.grid.coords()
    with pytest.raises(InvariantError):
        bando_total(np.cos(2 * np.pi * x), flat1, 0.0)


def test_first_character_on_torus(flat1, rng):
    from kahlerkit.invariants import vector_field

    ones = np.ones((1,) + flat1.grid.shape)
    assert abs(bando_f1_via_potential(vector_field(ones, flat1))) == 0
    g = metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005))
    X = vector_field(ones, g)
    assert X.accepted
    assert abs(bando_f1_via_potential(X)) < 1e-6


def test_first_character_needs_dimension_one(flat2):
    from kahlerkit.invariants import vector_field

    with pytest.raises(InvariantError):
        bando_f1_via_potential(vector_field(np.ones((2,) + flat2.grid.shape), flat2))


# --- Mabuchi energy ---------------------------------------------------------------

def test_constant_path(flat1):
    assert mabuchi_energy(KahlerPath.linear(flat1, np.zeros(flat1.grid.shape)), 0.1).value == 0


def test_round_trip_path(flat1, rng):
    phi = flat1.grid.random_potential(rng, 0.005)
    p = KahlerPath.linear(flat1, phi)
    assert abs(mabuchi_energy(p.then(p.reversed()), 0.1, tol=1e-10).value) < 1e-8


@pytest.mark.parametrize("eps", [1e-3, 2e-3])
def test_second_order_expansion_at_flat(flat1, eps):
    x, _ = flat1.grid.coords()
    nu = mabuchi_energy(KahlerPath.linear(flat1, eps * np.cos(2 * np.pi * x)), 0.1).value
    oracle = 0.5 * np.pi ** 4 * eps ** 2
    assert nu > 0
    assert abs(nu / oracle - 1) < 20 * eps ** 2


def test_path_independence_and_cocycle(flat1, rng):
    a, b, bump = (flat1.grid.random_potential(rng, 0.005) for _ in range(3))
    t, qt = 0.1, 1e-10
    lin = mabuchi_energy(KahlerPath.linear(flat1, a), t, tol=qt).value
    cub = mabuchi_energy(KahlerPath.cubic(flat1, a), t, tol=qt).value
    det = mabuchi_energy(KahlerPath.detour(flat1, a, bump), t, tol=qt).value
    assert abs(lin - cub) <= 1e-7 and abs(lin - det) <= 1e-7
    cyc = lin + mabuchi_between(flat1, a, b, t, tol=qt) + mabuchi_between(flat1, b, np.zeros_like(a), t, tol=qt)
    assert abs(cyc) <= 3e-7


def test_quadrature_is_worker_independent(flat1, rng):
    a = flat1.grid.random_potential(rng, 0.005)
    r1 = mabuchi_energy(KahlerPath.linear(flat1, a), 0.1, workers=1)
    r4 = mabuchi_energy(KahlerPath.linear(flat1, a), 0.1, workers=4)
    assert r1.value == r4.value and r1.converged


def test_derivative_identity_trivial(fs1, sphere):
    assert mabuchi_derivative_check(fs1, np.zeros(fs1.grid.shape), 0.1)["gap"] == 0
    d = mabuchi_derivative_check(fs1, sphere[2], 0.1)
    assert d["pass"] and abs(d["rhs"]) < 1e-10 and abs(d["lhs"]) < 1e-6


def test_derivative_identity_on_perturbed_cp1(fs1, sphere):
    Z = sphere[2]
    phi = 0.01 * (Z ** 2 - 1 / 3) + 0.005 * Z ** 3
    g = metric_from_potential(fs1, phi)
    u = np.real(transport_potential(Z, phi, fs1))
    assert abs(integrate_volume(u, g)) / volume(g) < 1e-8
    d = mabuchi_derivative_check(g, u, 0.1, tol=1e-10)
    assert d["gap"] <= d["tolerance"]


def test_derivative_identity_on_torus(flat1, rng):
    u = flat1.grid.random_potential(rng, 0.005)
    g = metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005))
    d = mabuchi_derivative_check(g, u, 0.1, require_holomorphic=False, tol=1e-10)
    assert d["gap"] <= d["tolerance"]
    assert abs(d["rhs"]) > 1e-6  # a nontrivial instance


def test_derivative_direction_must_be_real(flat1):
    with pytest.raises(InvariantError):
        mabuchi_derivative_check(flat1, 1j * np.ones(flat1.grid.shape), 0.1)
