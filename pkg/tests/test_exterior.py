import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kahlerkit.exterior import (FormError, MatrixPQForm, PQForm, char_coefficients, form_det, mixed_cm, power,
                                volume_sign, wedge)

from conftest import random_matrix


def dzdzb(m, i, j, c=1.0):
    return PQForm.basis_form(m, (i,), (j,), c)


def random_form(rng, m, p, q):
    shape = (math.comb(m, p), math.comb(m, q))
    return PQForm(m, p, q, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


# --- wedge ---------------------------------------------------------------

def test_basis_product_in_interleaved_order():
    w = wedge(dzdzb(2, 0, 0), dzdzb(2, 1, 1))
    # dz1 ^ dzb1 ^ dz2 ^ dzb2 = -dz1 ^ dz2 ^ dzb1 ^ dzb2
    assert w.degree == (2, 2)
    assert w[(0, 1), (0, 1)] == -1
    assert w[(1, 0), (0, 1)] == 1


def test_square_of_one_form_vanishes(rng):
    a = random_form(rng, 3, 1, 0)
    assert np.all(wedge(a, a).coeffs == 0)


def test_hand_expanded_product():
    a = dzdzb(2, 0, 0, 2.0) + dzdzb(2, 0, 1, 3.0)
    b = dzdzb(2, 1, 1, 5.0)
    # the dz1 dzb2 dz2 dzb2 term repeats dzb2 and drops out
    w = wedge(a, b)
    assert w.top() == pytest.approx(-10.0)


def test_unsorted_accessor_returns_signed_value():
    f = PQForm.basis_form(3, (2, 0), (1,), 4.0)
    assert f[(0, 2), (1,)] == -4.0
    assert f[(2, 0), (1,)] == 4.0
    assert f[(0, 0), (1,)] == 0.0


def test_degree_overflow_rejected():
    with pytest.raises(FormError):
        PQForm.zeros(2, 3, 0)
    with pytest.raises(FormError):
        wedge(dzdzb(2, 0, 0), dzdzb(3, 0, 0))


def test_too_high_degree_product_is_zero():
    w = wedge(dzdzb(1, 0, 0), dzdzb(1, 0, 0))
    assert np.all(w.coeffs == 0)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(1, 3), degs=st.lists(st.integers(0, 3), min_size=6,
                                                                          max_size=6))
def test_wedge_associative_and_graded_commutative(seed, m, degs):
    rng = np.random.default_rng(seed)
    p1, q1, p2, q2, p3, q3 = (min(d, m) for d in degs)
    a, b, c = random_form(rng, m, p1, q1), random_form(rng, m, p2, q2), random_form(rng, m, p3, q3)
    left, right = wedge(wedge(a, b), c), wedge(a, wedge(b, c))
    assert np.allclose(left.coeffs, right.coeffs, rtol=1e-12, atol=1e-12)
    sign = (-1) ** ((p1 + q1) * (p2 + q2))
    assert np.allclose(wedge(a, b).coeffs, sign * wedge(b, a).coeffs, rtol=1e-12, atol=1e-12)


# --- form_det ------------------------------------------------------------

def test_form_det_one_by_one():
    w = PQForm.from_hermitian(np.eye(1))
    d = form_det(MatrixPQForm.from_entries([[w]]))
    assert d.allclose(w)


def test_form_det_diagonal():
    al, be = dzdzb(2, 0, 1, 2.0), dzdzb(2, 1, 0, -3.0)
    z = PQForm.zeros(2, 1, 1)
    d = form_det(MatrixPQForm.from_entries([[al, z], [z, be]]))
    assert d.allclose(wedge(al, be))


def test_form_det_kahler_identity():
    omega = PQForm.from_hermitian(np.eye(2))
    d = form_det(MatrixPQForm.scalar_times_identity(omega))
    expected = wedge(dzdzb(2, 0, 0, 1j), dzdzb(2, 1, 1, 1j)) * 2
    assert d.allclose(power(omega, 2))
    assert d.allclose(expected)
    assert d.top() == pytest.approx(2 * volume_sign(2))


# --- mixed_cm ------------------------------------------------------------

@pytest.mark.parametrize("m", [1, 2, 3])
def test_mixed_cm_diagonal_is_det(rng, m):
    for _ in range(100):
        A = random_matrix(rng, m)
        assert abs(mixed_cm(*([A] * m)) - np.linalg.det(A)) <= 1e-12 * abs(np.linalg.det(A))


def test_mixed_cm_hand_value():
    assert mixed_cm(np.diag([1.0, 2.0]), np.diag([3.0, 4.0])) == pytest.approx(5.0, abs=1e-14)
    assert mixed_cm(np.eye(2), np.eye(2)) == pytest.approx(1.0, abs=1e-15)


def test_mixed_cm_batched(rng):
    A, B = random_matrix(rng, 2, (4, 3)), random_matrix(rng, 2, (4, 3))
    out = mixed_cm(A, B)
    assert out.shape == (4, 3)
    assert out[2, 1] == pytest.approx(mixed_cm(A[2, 1], B[2, 1]))


def test_mixed_cm_size_mismatch():
    with pytest.raises(FormError):
        mixed_cm(np.eye(2), np.eye(3))
    with pytest.raises(FormError):
        mixed_cm(np.eye(3), np.eye(3))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(2, 3))
def test_mixed_cm_symmetric_and_multilinear(seed, m):
    rng = np.random.default_rng(seed)
    mats = [random_matrix(rng, m) for _ in range(m)]
    base = mixed_cm(*mats)
    for perm in itertools.permutations(range(m)):
        assert abs(mixed_cm(*[mats[i] for i in perm]) - base) <= 1e-12 * max(1.0, abs(base))
    C = random_matrix(rng, m)
    a, b = rng.standard_normal(2)
    lhs = mixed_cm(a * mats[0] + b * C, *mats[1:])
    rhs = a * base + b * mixed_cm(C, *mats[1:])
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(2, 3))
def test_polarization_reconstructs_determinant(seed, m):
    rng = np.random.default_rng(seed)
    A1, A2 = random_matrix(rng, m), random_matrix(rng, m)
    t1, t2 = rng.standard_normal(2)
    direct = np.linalg.det(t1 * A1 + t2 * A2)
    total = 0.0
    for k in range(m + 1):
        args = [A1] * k + [A2] * (m - k)
        total += math.comb(m, k) * t1 ** k * t2 ** (m - k) * mixed_cm(*args)
    assert abs(total - direct) <= 1e-12 * max(1.0, abs(direct)) * 10


def test_mixed_cm_on_forms_matches_form_det(rng):
    m = 2
    coeffs = rng.standard_normal((m, m, m, m)) + 1j * rng.standard_normal((m, m, m, m))
    M = MatrixPQForm.from_tensor(coeffs)
    assert mixed_cm(M, M).allclose(form_det(M))


# --- char_coefficients ---------------------------------------------------

def test_char_coefficients_zero_and_diagonal():
    c = char_coefficients(np.zeros((3, 3)))
    assert [complex(v) for v in c] == [1, 0, 0, 0]
    a, b = 2.0 - 1j, 0.5
    c = char_coefficients(np.diag([a, b]))
    assert np.allclose([complex(v) for v in c], [1, a + b, a * b])


def test_top_char_coefficient_is_det(rng):
    for m in (1, 2, 3):
        A = random_matrix(rng, m, (5,))
        assert np.allclose(char_coefficients(A)[m], np.linalg.det(A), rtol=1e-12)


def test_top_char_coefficient_of_forms_is_form_det(rng):
    coeffs = rng.standard_normal((2, 2, 2, 2)) + 0j
    M = MatrixPQForm.from_tensor(coeffs)
    assert char_coefficients(M)[2].allclose(form_det(M))
    assert char_coefficients(M)[1].allclose(M.trace())


def test_char_coefficients_rejects_nonsquare():
    with pytest.raises(FormError):
        char_coefficients(np.zeros((2, 3)))
