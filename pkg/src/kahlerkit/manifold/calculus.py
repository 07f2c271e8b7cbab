"""Differential operators, integration and Poisson solves on grid fields."""

from __future__ import annotations

import math

import numpy as np
import scipy.sparse.linalg as spla

from ..exterior import FormError, PQForm, volume_sign
from .fields import MetricField, ScalarField, _inv, values_of
from .grids import ChartGrid, TorusGrid


class PoissonError(RuntimeError):
    def __init__(self, msg, history=()):
        super().__init__(msg)
        self.history = list(history)


def d_holo(f, grid=None):
    """Holomorphic gradient ``(d_1 f, ..., d_m f)`` stacked on a new leading axis."""
    grid = f.grid if isinstance(f, ScalarField) else grid
    v = values_of(f)
    return np.stack([grid.d_holo(v, k) for k in range(grid.m)])


def d_antiholo(f, grid=None):
    grid = f.grid if isinstance(f, ScalarField) else grid
    v = values_of(f)
    return np.stack([grid.d_antiholo(v, k) for k in range(grid.m)])


def metric_from_potential(g0: MetricField, phi) -> MetricField:
    """The metric of ``omega_0 + i d dbar phi``.

    Raises
    ------
    PositivityError
        If the new metric is not positive definite; the error names the worst
        node and its smallest eigenvalue.
    """
    grid = g0.grid
    v = np.real(values_of(phi))
    hess = grid.hessian(v)
    G = g0.G + hess
    G = 0.5 * (G + np.conj(np.swapaxes(G, 0, 1)))
    # relative matrix: H_ref^{-1} (G0 + hess)^T = rel0 + H_ref^{-1} hess^T
    rel = g0.rel + grid.rel_hessian(v)
    if grid.m == 1:
        rel = np.real(rel).astype(complex)
    return MetricField(grid, G, rel=rel)


def flat_metric(grid: TorusGrid) -> MetricField:
    G, _, _ = grid.ref_frame()
    return MetricField(grid, G.copy(), rel=G.copy())


def reference_metric(grid) -> MetricField:
    """Flat metric on a torus, Fubini-Study on the CP^1 chart."""
    G, _, _ = grid.ref_frame()
    m = grid.m
    eye = np.zeros((m, m) + grid.shape, complex)
    for a in range(m):
        eye[a, a] = 1.0
    return MetricField(grid, G.copy(), rel=eye)


def laplacian(u, g: MetricField):
    """Complex Laplacian ``g^{i jbar} d_i dbar_j u`` (half the Riemannian one)."""
    v = values_of(u)
    rh = g.grid.rel_hessian(v)
    if g.m == 1:
        return rh[0, 0] / g.rel[0, 0]
    relinv = _inv(g.rel)
    return np.einsum("ab...,ba...->...", relinv, rh)


def integrate(top: PQForm, grid):
    """Integral of a top-degree form over the manifold."""
    if not isinstance(top, PQForm):
        raise FormError("integrate expects a PQForm")
    if top.degree != (grid.m, grid.m):
        raise FormError(f"can only integrate forms of degree ({grid.m},{grid.m}), got {top.degree}")
    m = grid.m
    # prod_k (i dz^k ^ dzbar^k) = 2^m dx dy and equals volume_sign(m) times the canonical top basis form
    factor = (2.0 ** m) / volume_sign(m)
    return complex(factor * grid.integrate_coordinate(top.top()))


def integrate_volume(f, g: MetricField):
    """``int f omega^m``."""
    v = values_of(f)
    dens = math.factorial(g.m) * (2.0 ** g.m) * _volume_coefficient(g)
    return g.grid.integrate_coordinate(v * dens)


def volume_weights(g: MetricField):
    """Per-node weights ``w`` with ``sum(f * w)`` approximating ``int f omega^m``."""
    return math.factorial(g.m) * (2.0 ** g.m) * _volume_coefficient(g) * g.grid.coordinate_weights()


def _volume_coefficient(g: MetricField):
    # det g, evaluated through the relative matrix on the chart for accuracy
    if isinstance(g.grid, ChartGrid):
        return g.grid.fs_metric() * np.real(g.rel[0, 0])
    return g.det


def volume(g: MetricField) -> float:
    """``int omega^m``."""
    return float(np.real(integrate_volume(np.ones(g.grid.shape), g)))


def mean(f, g: MetricField):
    return integrate_volume(f, g) / volume(g)


def meanzero(f, g: MetricField):
    v = values_of(f)
    out = v - mean(v, g)
    return np.real(out) if np.isrealobj(v) else out


def l2_inner(u, v, g: MetricField):
    """``int u conj(v) omega^m``."""
    return integrate_volume(values_of(u) * np.conj(values_of(v)), g)


# ---------------------------------------------------------------------------
# Poisson problem


def solve_poisson(rhs, g: MetricField, tol=1e-12, maxiter=400, atol=1e-12):
    """Solve ``Lap_g u = rhs`` with ``int u omega^m = 0``.

    Torus metrics in dimension one reduce to a single flat inversion because
    ``d dbar u = g rhs``.  In dimension two the flat inverse preconditions GMRES.
    On the CP^1 chart the round Laplacian is inverted on spherical harmonics.

    Raises
    ------
    ValueError
        If ``rhs`` is not orthogonal to constants.
    PoissonError
        If the iteration does not converge; carries the residual history.
    """
    grid = g.grid
    r = values_of(rhs)
    is_real = np.isrealobj(r) or np.max(np.abs(np.imag(r))) <= 1e-14 * max(np.max(np.abs(r)), 1e-300)
    scale = max(float(np.max(np.abs(r))), 1e-300)
    if abs(integrate_volume(r, g)) > 1e-8 * scale * volume(g):
        raise ValueError("rhs has nonzero mean against the volume form; Poisson problem not solvable")
    if float(np.max(np.abs(r))) == 0.0:
        return ScalarField(grid, np.zeros(grid.shape), real=True, name="poisson")
    if isinstance(grid, ChartGrid):
        u = _solve_sphere(grid, g, r)
    elif grid.m == 1:
        u = _flat_inverse(grid, g.rel[0, 0] * r)
    else:
        u = _solve_torus_gmres(grid, g, r, tol, maxiter)
    u = meanzero(u, g)
    res = float(np.max(np.abs(laplacian(u, g) - r)))
    if res > max(1e-9 * scale, atol):
        raise PoissonError(f"Poisson residual {res:.2e} above tolerance (rhs scale {scale:.2e})", [res])
    if is_real:
        u = np.real(u)
    return ScalarField(grid, u, real=is_real, name="poisson")


def _flat_inverse(grid: TorusGrid, f):
    sym = np.array(grid.flat_laplacian_symbol())
    inv = np.zeros_like(sym)
    nz = sym != 0
    inv[nz] = 1.0 / sym[nz]
    return grid.apply_symbol(f, inv)


def _solve_torus_gmres(grid, g, r, tol, maxiter):
    n = grid.size
    shape = grid.shape
    Rc = values_of(r).astype(complex)
    w = _volume_coefficient(g)
    wsum = np.sum(w)

    def op(x):
        u = x.reshape(shape)
        # constraint row keeps the constant mode determined
        return (laplacian(u, g) + np.sum(w * u) / wsum).ravel()

    def prec(x):
        f = x.reshape(shape)
        return (_flat_inverse(grid, f) + np.mean(f)).ravel()

    A = spla.LinearOperator((n, n), matvec=op, dtype=complex)
    M = spla.LinearOperator((n, n), matvec=prec, dtype=complex)
    history = []
    x, info = spla.gmres(A, Rc.ravel(), M=M, rtol=tol, atol=0.0, restart=60, maxiter=maxiter,
                         callback=lambda rk: history.append(float(rk)), callback_type="pr_norm")
    if info != 0:
        raise PoissonError(f"GMRES did not converge (info={info})", history)
    return x.reshape(shape)


def _solve_sphere(grid, g, r):
    # Lap_g = 2 pi Lap_sphere / rho in one complex dimension, so invert the
    # round Laplacian on spherical harmonics
    return grid.sphere_laplacian_inverse(np.real(g.rel[0, 0]) * r / (2 * np.pi))
