"""Scalar and metric fields on a grid."""

from __future__ import annotations

import numpy as np

from ..exterior import PQForm

REAL_TOL = 1e-10
HERMITIAN_TOL = 1e-12


class PositivityError(ValueError):
    """A metric failed to be positive definite somewhere on the grid."""

    def __init__(self, worst_index, min_eig):
        self.worst_index = tuple(int(i) for i in worst_index)
        self.min_eig = float(min_eig)
        super().__init__(f"metric not positive definite: smallest eigenvalue {min_eig:.3e} at node {self.worst_index}")


class ScalarField:
    """Complex values on the nodes of a grid.

    A field flagged ``real`` must have a negligible imaginary part; the flag is
    checked at construction and the imaginary part is then discarded.
    """

    __slots__ = ("grid", "values", "real", "name")

    def __init__(self, grid, values, real=False, name="field"):
        values = np.asarray(values)
        if values.shape != grid.shape:
            raise ValueError(f"field shape {values.shape} does not match grid {grid.shape}")
        if real:
            scale = max(float(np.max(np.abs(values))), 1e-300)
            imag = float(np.max(np.abs(np.imag(values))))
            if imag > REAL_TOL * scale and imag > 1e-14:
                raise ValueError(f"field {name!r} flagged real has imaginary part {imag:.2e}")
            values = np.real(values).astype(float)
        else:
            values = values.astype(complex)
        self.grid, self.values, self.real, self.name = grid, values, real, name

    def __repr__(self):
        kind = "real" if self.real else "complex"
        return f"ScalarField({self.name!r}, {kind}, grid={self.grid!r})"

    def _wrap(self, values, real=None):
        real = self.real if real is None else real
        return ScalarField(self.grid, values, real=real, name=self.name)

    def __add__(self, other):
        ov = other.values if isinstance(other, ScalarField) else other
        real = self.real and (other.real if isinstance(other, ScalarField) else np.isrealobj(other))
        return ScalarField(self.grid, self.values + ov, real=real, name=self.name)

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1) * other

    def __mul__(self, other):
        ov = other.values if isinstance(other, ScalarField) else other
        real = self.real and (other.real if isinstance(other, ScalarField) else np.isrealobj(other))
        return ScalarField(self.grid, self.values * ov, real=real, name=self.name)

    __rmul__ = __mul__

    def __neg__(self):
        return self._wrap(-self.values)

    def sup(self):
        return float(np.max(np.abs(self.values)))


def values_of(f):
    return f.values if isinstance(f, ScalarField) else np.asarray(f)


def _eig_lowest(G):
    mats = np.moveaxis(G, (0, 1), (-2, -1))
    return np.linalg.eigvalsh(mats)[..., 0]


class MetricField:
    """Hermitian positive matrix field ``G[i, j] = g_{i jbar}``.

    Parameters
    ----------
    grid
        A :class:`TorusGrid` or :class:`ChartGrid`.
    G : ndarray, shape (m, m, *grid.shape)
    rel : ndarray, optional
        The matrix ``H_ref^{-1} G^T`` relative to the grid's reference frame.
        Supplying it avoids dividing by a small reference metric near chart poles.
    """

    def __init__(self, grid, G, rel=None, check=True):
        G = np.asarray(G, dtype=complex)
        m = grid.m
        if G.shape != (m, m) + grid.shape:
            raise ValueError(f"metric shape {G.shape} does not match ({m}, {m}) + {grid.shape}")
        self.grid, self.m, self.G = grid, m, G
        Gref, _, _ = grid.ref_frame()
        if rel is None:
            Ht = np.swapaxes(G, 0, 1)
            rel = np.einsum("ab...,bc...->ac...", _inv(np.swapaxes(Gref, 0, 1)), Ht)
        self.rel = np.asarray(rel, dtype=complex)
        if check:
            self._validate()
        self._inv = None
        self._det = None

    def _validate(self):
        herm = np.max(np.abs(self.G - np.conj(np.swapaxes(self.G, 0, 1))))
        scale = np.max(np.abs(self.G))
        if herm > HERMITIAN_TOL * max(scale, 1.0):
            raise ValueError(f"metric is not Hermitian (deviation {herm:.2e})")
        # positivity is judged on the relative matrix, which is O(1) even where
        # the reference metric degenerates in the chart
        if self.m == 1:
            low = np.real(self.rel[0, 0])
        else:
            low = _eig_lowest(self.G)
        if np.min(low) <= 0:
            idx = np.unravel_index(np.argmin(low), low.shape)
            raise PositivityError(idx, np.min(low))

    @property
    def inv(self):
        """``Ginv[j, i] = g^{i jbar}``, i.e. the matrix inverse of G."""
        if self._inv is None:
            self._inv = _inv(self.G)
        return self._inv

    @property
    def det(self):
        if self._det is None:
            self._det = np.real(np.linalg.det(np.moveaxis(self.G, (0, 1), (-2, -1))))
        return self._det

    def min_eigenvalue(self):
        Gh = np.moveaxis(self.G, (0, 1), (-2, -1))
        return np.linalg.eigvalsh(Gh)[..., 0]

    def kahler_form(self) -> PQForm:
        """``omega = i g_{k lbar} dz^k ^ dzbar^l`` as a (1,1)-form field."""
        return PQForm(self.m, 1, 1, 1j * self.G)

    def volume_density(self):
        """Coefficient of omega^m / m! against the coordinate measure, times 2^m.

        ``omega^m / m! = det(g) * 2^m dx dy``; the returned array is ``2^m det g``.
        """
        return (2.0 ** self.m) * self.det

    def __repr__(self):
        return f"MetricField(m={self.m}, grid={self.grid!r})"


def _inv(G):
    moved = np.moveaxis(G, (0, 1), (-2, -1))
    return np.moveaxis(np.linalg.inv(moved), (-2, -1), (0, 1))
