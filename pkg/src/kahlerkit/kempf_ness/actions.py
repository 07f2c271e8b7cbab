"""Unitary linear actions of tori and SU(2) on C^N and their moment maps."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg as sla

from .conventions import MOMENT_FACTOR


def spin_matrices(j):
    """``(J_x, J_y, J_z)`` for spin ``j`` in the basis ``|j>, |j-1>, ..., |-j>``."""
    j = Fraction(j)
    if j < 0 or (2 * j).denominator != 1:
        raise ValueError(f"spin must be a non-negative half integer, got {j}")
    n = int(2 * j) + 1
    ms = [float(j) - k for k in range(n)]
    jz = np.diag(ms).astype(complex)
    jp = np.zeros((n, n), complex)
    jf = float(j)
    for k in range(1, n):
        m = ms[k]
        jp[k - 1, k] = np.sqrt(jf * (jf + 1) - m * (m + 1))
    jm = jp.conj().T
    return (jp + jm) / 2, (jp - jm) / 2j, jz


@dataclass
class LinearAction:
    """A compact group acting unitarily on C^N.

    ``basis[a]`` is ``rho(xi_a)`` for the fixed basis ``xi_a`` of the real Lie
    algebra and ``structure[a, b, c]`` holds the constants of
    ``[xi_a, xi_b] = sum_c structure[a, b, c] xi_c``.
    """

    kind: str
    basis: np.ndarray
    structure: np.ndarray
    weights: np.ndarray | None = None
    spins: tuple = ()

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=complex)
        skew = max((float(np.max(np.abs(B + B.conj().T))) for B in self.basis), default=0.0)
        if skew > 1e-13:
            raise ValueError(f"rho(xi) must be skew-Hermitian (defect {skew:.2e})")

    @classmethod
    def torus(cls, weights):
        W = np.atleast_2d(np.asarray(weights))
        if not np.all(np.asarray(W) == np.round(W)):
            raise ValueError("torus weights must be integers")
        W = np.round(W).astype(int)
        basis = np.stack([np.diag(-1j * row.astype(float)) for row in W])
        k = W.shape[0]
        return cls("torus", basis, np.zeros((k, k, k)), weights=W)

    @classmethod
    def su2(cls, spins):
        spins = tuple(Fraction(s) for s in spins)
        blocks = [spin_matrices(s) for s in spins]
        if not blocks or all(b[0].shape[0] == 1 for b in blocks):
            raise ValueError("SU(2) representation needs at least one nontrivial spin block")
        basis = np.stack([-1j * sla.block_diag(*[b[a] for b in blocks]) for a in range(3)])
        eps = np.zeros((3, 3, 3))
        for a, b, c in [(0, 1, 2), (1, 2, 0), (2, 0, 1)]:
            eps[a, b, c] = 1.0
            eps[b, a, c] = -1.0
        return cls("su2", basis, eps, spins=spins)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def rank(self) -> int:
        """Real dimension of the Lie algebra."""
        return self.basis.shape[0]

    def rho(self, zeta):
        """``rho^c(zeta) = sum_a zeta_a rho(xi_a)``; complex ``zeta`` gives the complexified action."""
        return np.tensordot(np.asarray(zeta), self.basis, axes=1)

    def exp(self, zeta):
        return sla.expm(self.rho(zeta))

    def bracket(self, a, b):
        return np.einsum("i,j,ijk->k", np.asarray(a), np.asarray(b), self.structure)

    def ad(self, zeta):
        """Matrix of ``ad(zeta)`` in Lie algebra coordinates."""
        return np.einsum("a,abc->cb", np.asarray(zeta), self.structure)

    def Ad(self, g, zeta):
        """Coordinates of ``Ad(g) zeta`` for a group element given by its matrix ``g``."""
        zeta = np.asarray(zeta)
        if self.kind == "torus":
            return zeta.astype(complex)
        target = g @ self.rho(zeta) @ np.linalg.inv(g)
        A = self.basis.reshape(self.rank, -1).T
        coef, *_ = np.linalg.lstsq(A, target.ravel(), rcond=None)
        return coef

    def random_algebra(self, rng, complex_=False, scale=1.0):
        z = rng.standard_normal(self.rank)
        if complex_:
            z = z + 1j * rng.standard_normal(self.rank)
        return scale * z

    def random_compact(self, rng):
        return self.exp(self.random_algebra(rng, scale=np.pi))

    def random_complex(self, rng, scale=0.5):
        return self.exp(self.random_algebra(rng, complex_=True, scale=scale))


def moment_map(action: LinearAction, x):
    """``mu_a(x) = 1/2 <i rho(xi_a) x, x>`` as a real vector in Lie algebra coordinates."""
    x = np.asarray(x, dtype=complex)
    vals = np.einsum("i,aij,j->a", x.conj(), 1j * action.basis, x)
    return MOMENT_FACTOR * np.real(vals)


def projective_moment(action: LinearAction, x):
    """Moment map of the induced action on projective space, ``mu(x) / |x|^2``."""
    x = np.asarray(x, dtype=complex)
    n2 = float(np.real(np.vdot(x, x)))
    if n2 == 0.0:
        raise ValueError("projective moment map is undefined at x = 0")
    return moment_map(action, x) / n2


def kempf_ness_h(x) -> float:
    x = np.asarray(x, dtype=complex)
    return float(np.log(np.real(np.vdot(x, x))))
