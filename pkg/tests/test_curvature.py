import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerkit.curvature import (AdmissibilityWarning, admissible_t, admissible_threshold, chern_numbers, curvature,
                                 determinant_route, perturbed_scalar, scalar_from_top, sigma)
from kahlerkit.exterior import power
from kahlerkit.manifold.calculus import integrate_volume, metric_from_potential, volume
from kahlerkit.manifold.fubini_study import fubini_study

# admissibility threshold of the perturbed pairing on CP^2 with the FS metric (frozen by bisection)
CP2_NEGATIVE_THRESHOLD = -0.5


@pytest.fixture(scope="module")
def cp2():
    return fubini_study(2)[0]


def test_flat_torus_curvature_vanishes(flat1, flat2):
    for g in (flat1, flat2):
        curv = curvature(g)
        assert np.max(np.abs(curv.theta)) == 0
        for c in curv.chern[1:]:
            assert np.max(np.abs(c.coeffs)) == 0
        for t in (-0.1, 0.0, 0.3):
            assert np.max(np.abs(perturbed_scalar(g, t).S.values)) == 0


def test_cp1_first_chern_form_is_twice_kahler_form(fs1):
    curv = curvature(fs1)
    c1 = curv.chern[1].coeffs[0, 0]
    omega = fs1.kahler_form().coeffs[0, 0]
    assert np.max(np.abs(c1 - 2 * omega)) < 1e-6 * np.max(np.abs(omega))


def test_cp1_scalar_is_constant(fs1):
    for t in (0.0, 0.2, -0.1):
        S = perturbed_scalar(fs1, t).S.values
        assert np.max(np.abs(S - 4 * np.pi)) < 1e-5


def test_cp2_total_chern_form(cp2):
    curv = curvature(cp2)
    omega = cp2.kahler_form()
    for k in range(3):
        expected = power(omega, k) * math.comb(3, k) if k else None
        if k == 0:
            assert np.allclose(curv.chern[0].coeffs, 1)
        else:
            assert np.max(np.abs(curv.chern[k].coeffs - expected.coeffs)) < 1e-12 * np.max(np.abs(expected.coeffs))


def test_cp2_scalar_and_sigma(cp2):
    for t in (-0.1, 0.0, 0.05, 0.2):
        S = perturbed_scalar(cp2, t).S.values
        assert np.max(np.abs(S - 12 * np.pi * (1 + t))) < 1e-10
        assert sigma(cp2, t) == pytest.approx(3 + 3 * t, abs=1e-12)
    assert chern_numbers(cp2) == pytest.approx([1.0, 3.0, 3.0], abs=1e-12)


def test_cp2_scalar_is_linear_in_t(cp2):
    # Richardson: second difference in t vanishes for a quadratic-free family
    h = 1e-3
    S = [perturbed_scalar(cp2, t).S.values for t in (-h, 0.0, h)]
    assert np.max(np.abs(S[0] - 2 * S[1] + S[2])) < 1e-9


def test_linearized_first_chern_form(flat1):
    eps = 1e-4
    x, _ = flat1.grid.coords()
    g = metric_from_potential(flat1, eps * np.cos(2 * np.pi * x))
    c1 = curvature(g).chern[1].coeffs[0, 0]
    # c1 = -(1/2pi) i d dbar log det g ~ -(i/2pi) d dbar (-eps pi^2 cos / g0)
    g0 = float(np.real(flat1.G[0, 0].flat[0]))
    lin = -(1j / (2 * np.pi)) * flat1.grid.hessian(-eps * np.pi ** 2 * np.cos(2 * np.pi * x) / g0)[0, 0]
    assert np.max(np.abs(c1 - lin)) < 10 * eps ** 2 * np.pi ** 6


def test_ricci_form_is_real_and_matches_c1(rng, fs1, flat2):
    for g0 in (fs1, flat2):
        g = metric_from_potential(g0, g0.grid.random_potential(rng, 0.002, 1) if g0.m == 2 else
                                  g0.grid.random_potential(rng, 0.005))
        curv = curvature(g)
        ric = curv.ricci_form
        c1 = curv.chern[1]
        assert np.max(np.abs(ric.coeffs / (2 * np.pi) - c1.coeffs)) < 1e-10 * max(1.0, np.max(np.abs(c1.coeffs)))
        # real (1,1)-form: i a_{k lbar} with a Hermitian
        a = -1j * c1.coeffs
        assert np.max(np.abs(a - np.conj(np.swapaxes(a, 0, 1)))) < 1e-10 * max(1.0, np.max(np.abs(a)))


def test_sigma_values(flat1, fs1, rng):
    assert abs(sigma(flat1, 0.2)) <= 1e-9
    g = metric_from_potential(fs1, fs1.grid.random_potential(rng, 0.005))
    for t in (0.0, 0.3):
        assert sigma(fs1, t) == pytest.approx(2.0, abs=1e-9)
        assert sigma(g, t) == pytest.approx(2.0, abs=1e-5)


def test_torus_chern_numbers_topological(rng, flat1, flat2):
    for _ in range(3):
        g = metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005))
        n = chern_numbers(g)
        assert abs(n[1]) <= 1e-9
        assert n[0] == pytest.approx(volume(flat1), rel=1e-12)
    g = metric_from_potential(flat2, flat2.grid.random_potential(rng, 0.002, 1))
    n = chern_numbers(g)
    assert abs(n[1]) <= 1e-9 and abs(n[2]) <= 1e-9


def test_cp1_first_chern_number_perturbed(rng, fs1):
    g = metric_from_potential(fs1, fs1.grid.random_potential(rng, 0.005))
    assert chern_numbers(g)[1] == pytest.approx(2.0, abs=1e-5)


@pytest.mark.parametrize("t", [-0.1, 0.0, 0.05, 0.2])
def test_route_equivalence(t, rng, flat1, flat2, fs1, cp2):
    metrics = [metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005)),
               metric_from_potential(flat2, flat2.grid.random_potential(rng, 0.002, 1)),
               metric_from_potential(fs1, fs1.grid.random_potential(rng, 0.005)), cp2]
    for g in metrics:
        curv = curvature(g)
        S = perturbed_scalar(curv, t).S.values
        S_det = np.real(scalar_from_top(determinant_route(curv, t), g))
        assert np.max(np.abs(S - S_det)) <= 1e-10 * max(np.max(np.abs(S)), 1.0)


@settings(max_examples=8, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), t=st.floats(-0.1, 0.3))
def test_mean_identity(seed, t, fs1):
    rng = np.random.default_rng(seed)
    g = metric_from_potential(fs1, fs1.grid.random_potential(rng, 0.005))
    ps = perturbed_scalar(g, t)
    target = 2 * np.pi * ps.sigma
    assert abs(ps.mean_S - target) <= 1e-7 * abs(target)
    assert float(np.real(integrate_volume(ps.S.values, g))) / volume(g) == pytest.approx(ps.mean_S)


def test_admissibility(flat1, cp2, fs1):
    r0 = admissible_t(fs1, 0.0)
    assert r0["ok"] and r0["margin"] > 0
    flat = [admissible_t(flat1, t)["margin"] for t in (0.0, 0.3, -0.7)]
    assert flat[0] > 0 and np.allclose(flat, flat[0], rtol=1e-14)
    assert admissible_t(cp2, 0.2)["ok"]
    assert not admissible_t(cp2, -0.6)["ok"]
    assert admissible_threshold(cp2, -0.4, -0.6) == pytest.approx(CP2_NEGATIVE_THRESHOLD, abs=1e-8)


def test_admissibility_warning_attached(cp2):
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        ps = perturbed_scalar(cp2, -0.7)
    assert ps.warning is not None
    assert any(issubclass(w.category, AdmissibilityWarning) for w in caught)
