"""Stabilizer subalgebras, the character ``f_x`` and the extremal decomposition.

Points are treated projectively: ``zeta`` stabilizes ``x`` when
``rho^c(zeta) x`` is a multiple of ``x``.  The character uses the projective
moment map ``mu(x) / |x|^2`` so that it only depends on the line through ``x``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import LinearAction, projective_moment
from .conventions import CRITICAL_TOL, NULLSPACE_GAP, NULLSPACE_ZERO


class StabilizerError(RuntimeError):
    def __init__(self, msg, singular_values=()):
        super().__init__(msg)
        self.singular_values = np.asarray(singular_values)


class NotExtremalError(ValueError):
    pass


def _tangent_map(action, x):
    # columns (1 - x x^H / |x|^2) rho(xi_a) x
    x = np.asarray(x, complex)
    cols = np.einsum("aij,j->ia", action.basis, x)
    return cols - np.outer(x, x.conj() @ cols) / np.vdot(x, x).real


def _null_space(M, scale):
    k = M.shape[1]
    _, sv, vh = np.linalg.svd(M, full_matrices=True)
    s = np.zeros(k)
    s[: len(sv)] = sv
    lo, hi = NULLSPACE_ZERO * scale, NULLSPACE_GAP * scale
    murky = (s > lo) & (s < hi)
    if np.any(murky):
        raise StabilizerError(f"null space is ill-conditioned: singular values {s}", s)
    return vh[s <= lo].conj(), s


def rref(B, tol=1e-12):
    """Reduced row echelon form of the rows of ``B``: a canonical basis of their span."""
    A = np.array(B, dtype=complex)
    rows, cols = A.shape
    r = 0
    for c in range(cols):
        if r == rows:
            break
        piv = r + int(np.argmax(np.abs(A[r:, c])))
        if abs(A[piv, c]) <= tol:
            continue
        A[[r, piv]] = A[[piv, r]]
        A[r] /= A[r, c]
        for i in range(rows):
            if i != r:
                A[i] -= A[i, c] * A[r]
        r += 1
    A = A[:r]
    A.real[np.abs(A.real) < tol] = 0.0
    A.imag[np.abs(A.imag) < tol] = 0.0
    return A


def complex_stabilizer(action: LinearAction, x):
    """Basis (rows) of the complex stabilizer algebra and the singular values."""
    x = np.asarray(x, complex)
    if not np.any(x):
        raise ValueError("stabilizer of the zero vector is not projective")
    M = _tangent_map(action, x)
    scale = np.linalg.norm(x) * max(np.linalg.norm(B, 2) for B in action.basis)
    return _null_space(M, scale)


def compact_stabilizer(action: LinearAction, x):
    """Basis (rows, real) of the stabilizer algebra in ``K``."""
    x = np.asarray(x, complex)
    M = _tangent_map(action, x)
    Mr = np.vstack([M.real, M.imag])
    scale = np.linalg.norm(x) * max(np.linalg.norm(B, 2) for B in action.basis)
    basis, _ = _null_space(Mr, scale)
    return np.real(basis)


def character(action: LinearAction, x, zeta):
    """``f_x(zeta)``: complex-linear extension of the projective moment map."""
    return np.tensordot(np.asarray(zeta), projective_moment(action, x), axes=([-1], [0]))


def same_span(A, B, tol=1e-8) -> bool:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    if A.size == 0 or B.size == 0:
        return A.size == B.size
    ra = np.linalg.matrix_rank(A, tol)
    rb = np.linalg.matrix_rank(B, tol)
    return bool(ra == rb == np.linalg.matrix_rank(np.vstack([A, B]), tol))


@dataclass
class StabilizerReport:
    basis: np.ndarray  # rows, reduced row echelon form
    singular_values: np.ndarray
    f_values: np.ndarray
    character_gap: float
    closure_gap: float
    equivariance_gap: float

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    def record(self) -> dict:
        return {
            "dim": self.dim,
            "basis": [[[float(z.real), float(z.imag)] for z in row] for row in self.basis],
            "f_values": [[float(z.real), float(z.imag)] for z in self.f_values],
            "character_gap": self.character_gap,
            "equivariance_gap": self.equivariance_gap,
        }


def _in_span_residual(v, basis):
    if basis.shape[0] == 0:
        return float(np.linalg.norm(v))
    coef, *_ = np.linalg.lstsq(basis.T, v, rcond=None)
    return float(np.linalg.norm(basis.T @ coef - v))


def stabilizer_character(action: LinearAction, x, n_random: int = 10, seed: int = 0) -> StabilizerReport:
    """Stabilizer of ``[x]`` in the complexified algebra and its character ``f_x``.

    Checks that ``f_x`` kills brackets inside the stabilizer and that
    ``f_{gx}(Y) = f_x(Ad(g^{-1}) Y)`` for ``n_random`` random complex group
    elements ``g``.
    """
    x = np.asarray(x, complex)
    raw, sv = complex_stabilizer(action, x)
    basis = rref(raw) if raw.shape[0] else raw
    fvals = character(action, x, basis) if basis.shape[0] else np.zeros(0, complex)
    char_gap = 0.0
    closure = 0.0
    for a in basis:
        for b in basis:
            br = action.bracket(a, b)
            char_gap = max(char_gap, abs(complex(character(action, x, br))))
            closure = max(closure, _in_span_residual(br, basis))
    rng = np.random.default_rng(seed)
    eq_gap = 0.0
    for _ in range(n_random):
        g = action.random_complex(rng)
        y = g @ x
        ys, _ = complex_stabilizer(action, y)
        ginv = np.linalg.inv(g)
        for Y in ys:
            back = action.Ad(ginv, Y)
            eq_gap = max(eq_gap, abs(complex(character(action, y, Y) - character(action, x, back))))
    return StabilizerReport(basis, sv, np.asarray(fvals), char_gap, closure, eq_gap)


def criticality_gradient(action: LinearAction, x):
    """Derivatives of ``|mu(x)/|x|^2|^2`` along ``x -> exp(i s rho(xi_a)) x`` at ``s = 0``.

    The ``K`` directions contribute nothing because the squared norm is
    ``K``-invariant.
    """
    x = np.asarray(x, complex)
    n2 = float(np.vdot(x, x).real)
    mu = projective_moment(action, x)
    herm = 1j * action.basis  # Hermitian generators
    # d/ds of mu_b along direction a: 1/2 [x^H {H_a, H_b} x / |x|^2 - 2 x^H H_b x x^H H_a x / |x|^4]
    Hx = np.einsum("aij,j->ai", herm, x)
    pair = np.real(Hx.conj() @ Hx.T)  # x^H H_a H_b x, symmetrized by taking the real part
    expv = np.real(np.einsum("i,ai->a", x.conj(), Hx))
    dmu = 0.5 * (2 * pair / n2 - 2 * np.outer(expv, expv) / n2 ** 2)
    return 2.0 * dmu @ mu


@dataclass
class ExtremalReport:
    is_extremal: bool
    criticality: float
    moment: np.ndarray
    eigenvalues: np.ndarray
    invariance_gap: float
    center_gap: float
    zero_space_is_compact_complexified: bool
    reductive: bool
    moment_zero: bool

    @property
    def nonnegative(self) -> bool:
        return bool(np.all(self.eigenvalues.real >= -1e-10))

    @property
    def iff_holds(self) -> bool:
        return self.reductive == self.moment_zero

    def record(self) -> dict:
        return {
            "is_extremal": self.is_extremal,
            "criticality": self.criticality,
            "moment": [float(v) for v in self.moment],
            "eigenvalues": [[float(z.real), float(z.imag)] for z in self.eigenvalues],
            "nonnegative": self.nonnegative,
            "center_gap": self.center_gap,
            "zero_space_is_compact_complexified": self.zero_space_is_compact_complexified,
            "reductive": self.reductive,
            "moment_zero": self.moment_zero,
            "iff_holds": self.iff_holds,
        }


def extremal_decomposition(action: LinearAction, x, tol: float = CRITICAL_TOL, zero_tol: float = 1e-10) -> ExtremalReport:
    """Eigen-decomposition of ``ad(i mu(x))`` on the complex stabilizer of an extremal point.

    Raises
    ------
    NotExtremalError
        If ``x`` is not a critical point of ``|mu|^2`` on its orbit within ``tol``.
    """
    x = np.asarray(x, complex)
    crit = float(np.linalg.norm(criticality_gradient(action, x)))
    if crit > tol:
        raise NotExtremalError(f"x is not extremal: orbit derivative of |mu|^2 is {crit:.2e} > {tol:.0e}")
    mu = projective_moment(action, x)
    stab, _ = complex_stabilizer(action, x)
    d = stab.shape[0]
    ad = action.ad(1j * mu)
    if d:
        image = ad @ stab.T  # columns ad(i mu) Y
        R, *_ = np.linalg.lstsq(stab.T, image, rcond=None)
        inv_gap = float(np.linalg.norm(stab.T @ R - image))
        eig, vec = np.linalg.eig(R)
        zero_vecs = (vec[:, np.abs(eig) <= zero_tol]).T @ stab
    else:
        inv_gap, eig, zero_vecs = 0.0, np.zeros(0, complex), np.zeros((0, action.rank), complex)
    compact = compact_stabilizer(action, x).astype(complex)
    # i mu must lie in (k_x)^c and commute with it
    center = _in_span_residual(1j * mu, compact) if compact.shape[0] else float(np.linalg.norm(mu))
    for z in compact:
        center = max(center, float(np.linalg.norm(action.bracket(1j * mu, z))))
    mu_zero = bool(np.linalg.norm(mu) <= zero_tol)
    return ExtremalReport(
        is_extremal=True,
        criticality=crit,
        moment=mu,
        eigenvalues=np.sort_complex(eig),
        invariance_gap=inv_gap,
        center_gap=center,
        zero_space_is_compact_complexified=same_span(zero_vecs, compact) if (zero_vecs.size or compact.size) else True,
        reductive=same_span(stab, compact) if (stab.size or compact.size) else True,
        moment_zero=mu_zero,
    )
