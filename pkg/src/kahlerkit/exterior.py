"""Pointwise exterior algebra of complex (p,q)-forms in complex dimension m <= 3.

A :class:`PQForm` stores its coefficients in the basis ``dz^I ^ dzbar^J`` with
``I`` and ``J`` strictly increasing multi-indices.  Coefficient arrays carry the
basis axes first and any number of trailing "field" axes, so the same algebra
works for a single point or for a whole grid of nodes at once.

A :class:`MatrixPQForm` is an m x m matrix of forms of a common degree,
read as an endomorphism-valued form (row = upper index, column = lower index).
"""

from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

MAX_DIM = 3


class FormError(ValueError):
    """Invalid input to an exterior-algebra operation."""


@lru_cache(maxsize=None)
def basis(m: int, p: int) -> tuple[tuple[int, ...], ...]:
    """Strictly increasing multi-indices of length ``p`` drawn from ``range(m)``."""
    return tuple(itertools.combinations(range(m), p))


@lru_cache(maxsize=None)
def _index_of(m: int, p: int) -> dict[tuple[int, ...], int]:
    return {I: n for n, I in enumerate(basis(m, p))}


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _wedge_table(m, p1, q1, p2, q2):
    # entries (i1, j1, i2, j2, i_out, j_out, sign)
    out_I = _index_of(m, p1 + p2)
    out_J = _index_of(m, q1 + q2)
    table = []
    for i1, I1 in enumerate(basis(m, p1)):
        for i2, I2 in enumerate(basis(m, p2)):
            sI = perm_sign(I1 + I2)
            if sI == 0:
                continue
            I = tuple(sorted(I1 + I2))
            for j1, J1 in enumerate(basis(m, q1)):
                for j2, J2 in enumerate(basis(m, q2)):
                    sJ = perm_sign(J1 + J2)
                    if sJ == 0:
                        continue
                    J = tuple(sorted(J1 + J2))
                    # move dz^{I2} left past dzbar^{J1}
                    s = sI * sJ * (-1) ** (len(J1) * len(I2))
                    table.append((i1, j1, i2, j2, out_I[I], out_J[J], s))
    return tuple(table)


class PQForm:
    """A (p,q)-form with complex coefficients, possibly over a field of nodes.

    Parameters
    ----------
    m : int
        Complex dimension, 1 <= m <= 3.
    p, q : int
        Holomorphic and antiholomorphic degree.
    coeffs : array_like
        Shape ``(C(m,p), C(m,q), *field_shape)``.
    """

    __slots__ = ("m", "p", "q", "coeffs")

    def __init__(self, m: int, p: int, q: int, coeffs):
        if not 1 <= m <= MAX_DIM:
            raise FormError(f"complex dimension must be in 1..{MAX_DIM}, got {m}")
        if not (0 <= p <= m and 0 <= q <= m):
            raise FormError(f"degree ({p},{q}) exceeds ({m},{m})")
        coeffs = np.asarray(coeffs, dtype=complex)
        nI, nJ = math.comb(m, p), math.comb(m, q)
        if coeffs.shape[:2] != (nI, nJ):
            raise FormError(f"coefficient shape {coeffs.shape} does not start with {(nI, nJ)}")
        self.m, self.p, self.q, self.coeffs = m, p, q, coeffs

    # construction -----------------------------------------------------
    @classmethod
    def zeros(cls, m, p, q, field_shape=()):
        return cls(m, p, q, np.zeros((math.comb(m, p), math.comb(m, q)) + tuple(field_shape), complex))

    @classmethod
    def scalar(cls, m, values):
        """The (0,0)-form with the given values."""
        values = np.asarray(values, dtype=complex)
        return cls(m, 0, 0, values[None, None])

    @classmethod
    def basis_form(cls, m, I, J, coeff=1.0):
        """``coeff * dz^I ^ dzbar^J`` for arbitrary (unsorted) index tuples."""
        I, J = tuple(I), tuple(J)
        f = cls.zeros(m, len(I), len(J), np.shape(coeff))
        s = perm_sign(I) * perm_sign(J)
        if s:
            f.coeffs[_index_of(m, len(I))[tuple(sorted(I))], _index_of(m, len(J))[tuple(sorted(J))]] = s * np.asarray(coeff)
        return f

    @classmethod
    def from_hermitian(cls, matrix, m=None):
        """The (1,1)-form ``i * a_{k lbar} dz^k ^ dzbar^l`` from ``a`` of shape (m, m, ...)."""
        a = np.asarray(matrix, dtype=complex)
        m = a.shape[0] if m is None else m
        return cls(m, 1, 1, 1j * a)

    # accessors --------------------------------------------------------
    @property
    def degree(self) -> tuple[int, int]:
        return self.p, self.q

    @property
    def field_shape(self) -> tuple[int, ...]:
        return self.coeffs.shape[2:]

    def __getitem__(self, key):
        """Signed canonical coefficient of ``dz^I ^ dzbar^J`` for unsorted I, J."""
        I, J = (tuple(k) for k in key)
        if len(I) != self.p or len(J) != self.q:
            raise FormError("multi-index lengths do not match the form degree")
        s = perm_sign(I) * perm_sign(J)
        if s == 0:
            return np.zeros(self.field_shape, complex)
        return s * self.coeffs[_index_of(self.m, self.p)[tuple(sorted(I))], _index_of(self.m, self.q)[tuple(sorted(J))]]

    def top(self):
        """Coefficient of ``dz^1..dz^m ^ dzbar^1..dzbar^m``; requires degree (m,m)."""
        if self.degree != (self.m, self.m):
            raise FormError(f"top coefficient needs degree ({self.m},{self.m}), got {self.degree}")
        return self.coeffs[0, 0]

    # arithmetic -------------------------------------------------------
    def _check_same(self, other):
        if not isinstance(other, PQForm):
            return NotImplemented
        if other.m != self.m:
            raise FormError(f"dimension mismatch: {self.m} vs {other.m}")
        if other.degree != self.degree:
            raise FormError(f"degree mismatch: {self.degree} vs {other.degree}")
        return other

    def __add__(self, other):
        other = self._check_same(other)
        if other is NotImplemented:
            return other
        return PQForm(self.m, self.p, self.q, self.coeffs + other.coeffs)

    def __sub__(self, other):
        other = self._check_same(other)
        if other is NotImplemented:
            return other
        return PQForm(self.m, self.p, self.q, self.coeffs - other.coeffs)

    def __neg__(self):
        return PQForm(self.m, self.p, self.q, -self.coeffs)

    def __mul__(self, factor):
        """Multiply by a scalar or by a function on the field (broadcast over nodes)."""
        if isinstance(factor, PQForm):
            return NotImplemented
        return PQForm(self.m, self.p, self.q, self.coeffs * np.asarray(factor)[None, None])

    __rmul__ = __mul__

    def __xor__(self, other):
        return wedge(self, other)

    def conj(self):
        """Complex conjugate, as a (q,p)-form."""
        out = PQForm.zeros(self.m, self.q, self.p, self.field_shape)
        sign = (-1) ** (self.p * self.q)
        out.coeffs[...] = sign * np.conj(np.swapaxes(self.coeffs, 0, 1))
        return out

    def allclose(self, other, rtol=1e-12, atol=1e-12):
        other = self._check_same(other)
        return bool(np.allclose(self.coeffs, other.coeffs, rtol=rtol, atol=atol))

    def __repr__(self):
        return f"PQForm(m={self.m}, deg=({self.p},{self.q}), field_shape={self.field_shape})"


def wedge(a: PQForm, b: PQForm) -> PQForm:
    """Exterior product ``a ^ b``.

    Degrees that would exceed (m,m) give the zero form of the clipped degree
    class, i.e. an identically-zero result of degree (min(p,m), min(q,m)).
    """
    if not isinstance(a, PQForm) or not isinstance(b, PQForm):
        raise FormError("wedge expects two PQForm operands")
    if a.m != b.m:
        raise FormError(f"dimension mismatch: {a.m} vs {b.m}")
    m = a.m
    p, q = a.p + b.p, a.q + b.q
    shape = np.broadcast_shapes(a.field_shape, b.field_shape)
    if p > m or q > m:
        return PQForm.zeros(m, min(p, m), min(q, m), shape)
    out = np.zeros((math.comb(m, p), math.comb(m, q)) + shape, complex)
    for i1, j1, i2, j2, io, jo, s in _wedge_table(m, a.p, a.q, b.p, b.q):
        prod = a.coeffs[i1, j1] * b.coeffs[i2, j2]
        if s > 0:
            out[io, jo] += prod
        else:
            out[io, jo] -= prod
    return PQForm(m, p, q, out)


def wedge_all(forms):
    forms = list(forms)
    acc = forms[0]
    for f in forms[1:]:
        acc = wedge(acc, f)
    return acc


def power(form: PQForm, k: int) -> PQForm:
    """k-fold wedge power; k = 0 gives the constant 1."""
    if k == 0:
        return PQForm.scalar(form.m, np.ones(form.field_shape))
    return wedge_all([form] * k)


class MatrixPQForm:
    """An m x m matrix of (p,q)-forms; coefficient shape ``(m, m, nI, nJ, *field)``."""

    __slots__ = ("m", "p", "q", "coeffs")

    def __init__(self, m: int, p: int, q: int, coeffs):
        coeffs = np.asarray(coeffs, dtype=complex)
        n = coeffs.shape[0]
        if coeffs.ndim < 4 or coeffs.shape[1] != n:
            raise FormError(f"matrix form needs a square leading block, got shape {coeffs.shape}")
        if coeffs.shape[2:4] != (math.comb(m, p), math.comb(m, q)):
            raise FormError(f"entries are not ({p},{q})-forms in dimension {m}")
        self.m, self.p, self.q, self.coeffs = m, p, q, coeffs

    @property
    def size(self) -> int:
        return self.coeffs.shape[0]

    @property
    def degree(self):
        return self.p, self.q

    @property
    def field_shape(self):
        return self.coeffs.shape[4:]

    def entry(self, i, j) -> PQForm:
        return PQForm(self.m, self.p, self.q, self.coeffs[i, j])

    @classmethod
    def from_entries(cls, entries):
        rows = [list(r) for r in entries]
        first = rows[0][0]
        for r in rows:
            if len(r) != len(rows):
                raise FormError("matrix of forms must be square")
            for e in r:
                if e.m != first.m or e.degree != first.degree:
                    raise FormError("all entries must share dimension and degree")
        shape = np.broadcast_shapes(*(e.field_shape for r in rows for e in r))
        coeffs = np.array([[np.broadcast_to(e.coeffs, e.coeffs.shape[:2] + shape) for e in r] for r in rows])
        return cls(first.m, first.p, first.q, coeffs)

    @classmethod
    def scalar_times_identity(cls, form: PQForm, n=None):
        """``form (x) I`` as an n x n matrix of forms (default n = m)."""
        n = form.m if n is None else n
        coeffs = np.zeros((n, n) + form.coeffs.shape, complex)
        for i in range(n):
            coeffs[i, i] = form.coeffs
        return cls(form.m, form.p, form.q, coeffs)

    @classmethod
    def from_tensor(cls, tensor, m=None):
        """(1,1) matrix form ``T[a, b, k, l] dz^k ^ dzbar^l`` from shape (n, n, m, m, ...)."""
        t = np.asarray(tensor, dtype=complex)
        m = t.shape[2] if m is None else m
        return cls(m, 1, 1, t)

    def __add__(self, other):
        if not isinstance(other, MatrixPQForm) or other.degree != self.degree or other.m != self.m:
            raise FormError("incompatible matrix forms")
        return MatrixPQForm(self.m, self.p, self.q, self.coeffs + other.coeffs)

    def __mul__(self, factor):
        f = np.asarray(factor)
        return MatrixPQForm(self.m, self.p, self.q, self.coeffs * f[None, None, None, None])

    __rmul__ = __mul__

    def submatrix(self, idx):
        idx = list(idx)
        return MatrixPQForm(self.m, self.p, self.q, self.coeffs[np.ix_(idx, idx)])

    def trace(self) -> PQForm:
        return PQForm(self.m, self.p, self.q, sum(self.coeffs[i, i] for i in range(self.size)))

    def conjugate_by(self, B):
        """Change of frame on the endomorphism part: ``B^{-1} M B`` (B may vary over nodes)."""
        B = np.asarray(B, dtype=complex)
        Binv = _batched_inv(B)
        c = np.einsum("ab...,bcij...,cd...->adij...", Binv, self.coeffs, B)
        return MatrixPQForm(self.m, self.p, self.q, c)

    def __repr__(self):
        return f"MatrixPQForm(size={self.size}, m={self.m}, deg=({self.p},{self.q}), field_shape={self.field_shape})"


def _batched_inv(B):
    # B has shape (n, n, *field); invert per node
    moved = np.moveaxis(B, (0, 1), (-2, -1))
    return np.moveaxis(np.linalg.inv(moved), (-2, -1), (0, 1))


def _require_11(M: MatrixPQForm, what="matrix"):
    if not isinstance(M, MatrixPQForm):
        raise FormError(f"{what} must be a MatrixPQForm")
    if M.degree != (1, 1):
        raise FormError(f"{what} entries must be (1,1)-forms, got {M.degree}")


def form_det(M: MatrixPQForm) -> PQForm:
    """Determinant of an n x n matrix of (1,1)-forms, an (n,n)-form.

    (1,1)-forms commute under wedge, so the Leibniz expansion is well defined.
    """
    _require_11(M)
    n = M.size
    total = None
    for perm in itertools.permutations(range(n)):
        term = wedge_all([M.entry(i, perm[i]) for i in range(n)])
        s = perm_sign(perm)
        total = term * s if total is None else total + term * s
    return total


def _is_form_matrix(A):
    return isinstance(A, MatrixPQForm)


def mixed_cm(*mats):
    """Polarization of the determinant.

    ``mixed_cm(A_1, ..., A_n)`` is the coefficient of ``n! t_1 ... t_n`` in
    ``det(t_1 A_1 + ... + t_n A_n)``.  Arguments are either all
    :class:`MatrixPQForm` of degree (1,1) (the result is a form) or all plain
    square matrices; plain matrices may be batched with shape ``(..., n, n)``.
    """
    if len(mats) == 1 and isinstance(mats[0], (list, tuple)):
        mats = tuple(mats[0])
    n = len(mats)
    if n == 0:
        raise FormError("mixed_cm needs at least one argument")
    if all(_is_form_matrix(A) for A in mats):
        for A in mats:
            _require_11(A, "mixed_cm argument")
        if any(A.size != n for A in mats) or any(A.m != mats[0].m for A in mats):
            raise FormError("mixed_cm needs n arguments of size n x n in a common dimension")
        total = None
        for pi in itertools.permutations(range(n)):
            for sigma in itertools.permutations(range(n)):
                term = wedge_all([mats[pi[i]].entry(i, sigma[i]) for i in range(n)]) * perm_sign(sigma)
                total = term if total is None else total + term
        return total * (1.0 / math.factorial(n))
    if any(_is_form_matrix(A) for A in mats):
        raise FormError("mixed_cm arguments must be all forms or all plain matrices")
    arrs = [np.asarray(A, dtype=complex) for A in mats]
    if any(a.shape[-2:] != (n, n) for a in arrs):
        raise FormError(f"mixed_cm needs {n} matrices of size {n} x {n}")
    shape = np.broadcast_shapes(*(a.shape for a in arrs))
    arrs = [np.broadcast_to(a, shape) for a in arrs]
    total = np.zeros(shape[:-2], complex)
    for pi in itertools.permutations(range(n)):
        rows = np.stack([arrs[pi[i]][..., i, :] for i in range(n)], axis=-2)
        total = total + np.linalg.det(rows)
    return total / math.factorial(n)


def char_coefficients(A):
    """Coefficients ``[c_0, ..., c_n]`` of ``det(I + t A)``.

    ``c_k`` is the sum of the principal k x k minors.  For a matrix of
    (1,1)-forms the minors are form determinants and ``c_k`` is a (k,k)-form;
    for plain (possibly batched ``(..., n, n)``) matrices they are numbers.
    """
    if _is_form_matrix(A):
        _require_11(A)
        n = A.size
        out = [PQForm.scalar(A.m, np.ones(A.field_shape))]
        for k in range(1, n + 1):
            ck = None
            for S in itertools.combinations(range(n), k):
                d = form_det(A.submatrix(S))
                ck = d if ck is None else ck + d
            out.append(ck)
        return out
    a = np.asarray(A, dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise FormError("char_coefficients needs a square matrix")
    n = a.shape[-1]
    out = [np.ones(a.shape[:-2], complex)]
    for k in range(1, n + 1):
        ck = np.zeros(a.shape[:-2], complex)
        for S in itertools.combinations(range(n), k):
            ck = ck + np.linalg.det(a[..., list(S), :][..., :, list(S)])
        out.append(ck)
    return out


def volume_sign(m: int) -> complex:
    """Constant ``s`` with ``prod_k (i dz^k ^ dzbar^k) = s * dz^{1..m} ^ dzbar^{1..m}``."""
    order = []
    for k in range(m):
        order += [k, m + k]
    # reorder (z1, zb1, z2, zb2, ...) into (z1..zm, zb1..zbm)
    return (1j ** m) * perm_sign(order)
