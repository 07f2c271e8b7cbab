"""The fourth-order Lichnerowicz operator and holomorphy potentials.

``L u = Lap^2 u + R^{jbar i} d_i dbar_j u + g^{i jbar} d_i S dbar_j u`` where
``S`` is the unperturbed scalar curvature.  Equivalently ``L = D^* D`` with
``D u`` the antiholomorphic Hessian ``nabla_ibar nabla_jbar u``; the kernel of
``L`` is the space of functions whose gradient field ``g^{i jbar} dbar_j u d_i``
is holomorphic.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg as spla

from .curvature import CurvatureData, curvature, perturbed_scalar
from .manifold.calculus import (
    integrate_volume,
    laplacian,
    metric_from_potential,
    volume,
    volume_weights,
)
from .manifold.fields import MetricField, ScalarField, values_of
from .manifold.grids import ChartGrid, TorusGrid

# first nonzero eigenvalue of L on the model geometries (flat unit torus and
# Fubini-Study CP^1 with volume one); used to scale the default kernel tolerance
FLAT_TORUS_GAP = np.pi ** 4
FS_CP1_GAP = 96 * np.pi ** 2


class EigensolverError(RuntimeError):
    def __init__(self, msg, history=None):
        super().__init__(msg)
        self.history = history


def _curv(g):
    return g if isinstance(g, CurvatureData) else curvature(g)


def dbar_hessian(u, curv: CurvatureData):
    """``(D u)[i, j] = dbar_i dbar_j u - conj(Gamma^k_ij) dbar_k u``.

    ``u`` may carry leading batch axes; the result has shape ``(m, m, *u.shape)``.
    """
    g = curv.metric
    grid, m = g.grid, g.m
    v = values_of(u)
    db = np.stack([grid.d_antiholo(v, k) for k in range(m)])
    extra = v.ndim - len(grid.shape)
    out = np.empty((m, m) + v.shape, complex)
    for i in range(m):
        for j in range(m):
            acc = grid.d_antiholo(db[j], i)
            for k in range(m):
                gam = np.conj(curv.connection[i, k, j])  # Gamma^k_{ij} = A_i[k, j]
                acc = acc - gam.reshape((1,) * extra + gam.shape) * db[k]
            out[i, j] = acc
    return out


def dbar_hessian_adjoint(T, curv: CurvatureData):
    """Adjoint of :func:`dbar_hessian` for the Euclidean node inner product."""
    g = curv.metric
    grid, m = g.grid, g.m
    extra = T.ndim - 2 - len(grid.shape)
    out = 0
    for i in range(m):
        for j in range(m):
            out = out + grid.d_holo(grid.d_holo(T[i, j], j), i)
    for k in range(m):
        acc = 0
        for i in range(m):
            for j in range(m):
                gam = curv.connection[i, k, j]
                acc = acc + gam.reshape((1,) * extra + gam.shape) * T[i, j]
        out = out + grid.d_holo(acc, k)
    return out


def tensor_metric_apply(T, g: MetricField, weights=None):
    """``(M T)[k, l] = w sum_ij Ginv[i, k] Ginv[j, l] T[i, j]`` so that ``<T, T> = sum conj(T) (M T)``."""
    Ginv = g.inv
    extra = T.ndim - 2 - len(g.grid.shape)
    Gi = Ginv.reshape(Ginv.shape[:2] + (1,) * extra + Ginv.shape[2:])
    out = np.einsum("ik...,jl...,ij...->kl...", Gi, Gi, T)
    if weights is not None:
        out = out * weights
    return out


def tensor_norm2(T, g: MetricField):
    """Pointwise ``|T|_g^2`` of a covariant antiholomorphic 2-tensor."""
    return np.real(np.sum(np.conj(T) * tensor_metric_apply(T, g), axis=(0, 1)))


def holomorphy_residual(u, g) -> dict:
    """Size of ``dbar grad' u``; zero exactly for holomorphy potentials.

    Returns ``sup`` (pointwise g-norm, sup over nodes), ``l2`` and ``relative``
    (L2 norm divided by the L2 norm of ``u``).
    """
    curv = _curv(g)
    metric = curv.metric
    T = dbar_hessian(u, curv)
    n2 = tensor_norm2(T, metric)
    l2 = float(np.sqrt(max(np.real(integrate_volume(n2, metric)), 0.0)))
    un = float(np.sqrt(np.real(integrate_volume(np.abs(values_of(u)) ** 2, metric))))
    return {"sup": float(np.sqrt(np.max(n2))), "l2": l2, "relative": l2 / un if un > 0 else 0.0}


# ---------------------------------------------------------------------------
# operator


@dataclass
class OperatorHandle:
    """The operator ``L_g`` with cached curvature data and application counts."""

    metric: MetricField
    curv: CurvatureData
    S: np.ndarray
    ricci_up: np.ndarray  # R^{jbar i} stored as [i, j]
    applications: int = 0
    weak_applications: int = 0

    @classmethod
    def build(cls, g: MetricField):
        curv = curvature(g)
        S = perturbed_scalar(curv, 0.0, check_admissible=False).S.values
        m = g.m
        ric = sum(curv.theta[a, a] for a in range(m))  # R_{k lbar} as [k, l]
        Ginv = g.inv  # Ginv[j, i] = g^{i jbar}
        # R^{jbar i} = g^{i kbar} g^{l jbar} R_{l kbar}
        ricci_up = np.einsum("ki...,jl...,lk...->ij...", Ginv, Ginv, ric)
        return cls(g, curv, S, ricci_up)

    def apply(self, u):
        """Strong form of ``L u``."""
        self.applications += 1
        g = self.metric
        grid, m = g.grid, g.m
        v = values_of(u)
        lap = laplacian(v, g)
        out = laplacian(lap, g)
        hess = grid.hessian(v)
        out = out + np.einsum("ij...,ij...->...", self.ricci_up, hess)
        dS = np.stack([grid.d_holo(self.S, k) for k in range(m)])
        dbu = np.stack([grid.d_antiholo(v, k) for k in range(m)])
        out = out + np.einsum("ji...,i...,j...->...", g.inv, dS, dbu)
        return out

    def weak_apply(self, v, weights=None):
        """``D^H M D v``: the Hermitian positive matrix of ``<D u, D v>``."""
        self.weak_applications += 1
        w = volume_weights(self.metric) if weights is None else weights
        T = dbar_hessian(v, self.curv)
        return dbar_hessian_adjoint(tensor_metric_apply(T, self.metric, w), self.curv)


def apply_L(u, g) -> np.ndarray:
    """``L_g u`` in strong form (see :class:`OperatorHandle`)."""
    op = g if isinstance(g, OperatorHandle) else OperatorHandle.build(g)
    return op.apply(u)


# ---------------------------------------------------------------------------
# kernel


@dataclass
class PotentialBasis:
    """L2-orthonormal functions ``1/sqrt(V), u_1, ..., u_d`` spanning ker L."""

    metric: MetricField
    functions: np.ndarray  # (d + 1, *grid) with the normalized constant first
    eigenvalues: np.ndarray  # eigenvalues of the returned kernel vectors (constant first)
    spectrum: np.ndarray  # smallest computed eigenvalues, constant excluded
    residuals: np.ndarray
    tol: float
    gram_residual: float = 0.0
    history: list = field(default_factory=list)

    @property
    def dim_complex(self) -> int:
        return self.functions.shape[0] - 1

    @property
    def smallest_nonconstant(self) -> float:
        return float(self.spectrum[0])

    def report(self, manifold: str) -> dict:
        return {
            "manifold": manifold,
            "dim_complex_kernel": int(self.dim_complex),
            "eigenvalues_below_tol": [float(x) for x in self.eigenvalues[1:]],
            "residuals": [float(x) for x in self.residuals],
            "smallest_nonkernel_eigenvalue": float(self.spectrum[self.dim_complex]) if len(self.spectrum) > self.dim_complex else None,
            "tol": float(self.tol),
        }


def _gram(funcs, g):
    w = volume_weights(g)
    F = funcs.reshape(funcs.shape[0], -1)
    return (np.conj(F) * w.ravel()[None]) @ F.T


def _orthonormalize(funcs, g):
    """L2(omega^m)-orthonormalize rows of ``funcs`` keeping the first row's direction."""
    Gm = _gram(funcs, g)
    L = np.linalg.cholesky(Gm)
    # rows u_i with <u_i, u_j> = delta: U = L^{-1} F (Gram = conj(F) W F^T = L L^H)
    coeff = np.linalg.inv(L)
    F = funcs.reshape(funcs.shape[0], -1)
    out = np.conj(coeff) @ F
    return out.reshape(funcs.shape)


def default_tol(g: MetricField) -> float:
    gap = FS_CP1_GAP if isinstance(g.grid, ChartGrid) else FLAT_TORUS_GAP
    return 1e-4 * gap


def kernel_basis(g: MetricField, tol=None, n_eig=None, lmax=None, seed=0) -> PotentialBasis:
    """Holomorphy potentials of ``g``: eigenfunctions of ``L`` with eigenvalue below ``tol``.

    On tori the pencil ``(D^H M D, W)`` is solved matrix-free by LOBPCG with a
    flat biharmonic preconditioner, constants deflated as a constraint.  On the
    CP^1 chart the operator is small enough to assemble in a spherical
    harmonic Galerkin basis and solve densely.
    """
    tol = default_tol(g) if tol is None else tol
    if isinstance(g.grid, ChartGrid):
        return _kernel_sphere(g, tol, lmax)
    if isinstance(g.grid, TorusGrid):
        return _kernel_torus(g, tol, n_eig or (8 * g.m + 4), seed)
    raise NotImplementedError("kernel_basis needs a grid with differentiation")


def _finish(g, vecs, vals, spectrum, residuals, tol, history=None):
    const = np.ones((1,) + g.grid.shape, complex)
    keep = [i for i, lam in enumerate(vals) if lam < tol]
    funcs = np.concatenate([const, vecs[keep]], axis=0) if keep else const
    funcs = _orthonormalize(funcs, g)
    Gm = _gram(funcs, g)
    gram_res = float(np.max(np.abs(Gm - np.eye(len(funcs)))))
    return PotentialBasis(g, funcs, np.concatenate([[0.0], np.asarray(vals)[keep]]),
                          np.asarray(spectrum), np.asarray(residuals)[keep], tol, gram_res, history or [])


def _kernel_sphere(g, tol, lmax):
    grid = g.grid
    op = OperatorHandle.build(g)
    Y, _ = grid.sh_basis(lmax)
    nb = Y.shape[0]
    w = volume_weights(g)
    T = dbar_hessian(Y.astype(complex), op.curv)  # (1, 1, nb, *grid)
    MT = tensor_metric_apply(T, g, w)
    Tf = T.reshape(nb, -1)
    A = np.conj(Tf) @ MT.reshape(nb, -1).T
    A = 0.5 * (A + np.conj(A.T))
    Yf = Y.reshape(nb, -1)
    B = (Yf * w.ravel()[None]) @ Yf.T
    B = 0.5 * (B + B.T)
    vals, vecs = scipy.linalg.eigh(A, B.astype(complex))
    funcs = np.tensordot(vecs.T, Y, axes=(1, 0))  # (nb, *grid)
    # drop the constant: the eigenvector most aligned with 1
    const_overlap = np.abs(np.conj(vecs).T @ (B @ grid.sh_analysis(np.ones(grid.shape), lmax)))
    ic = int(np.argmax(const_overlap))
    order = [i for i in range(nb) if i != ic]
    vals_nc, funcs_nc = vals[order], funcs[order]
    residuals = []
    for i in range(len(order)):
        if vals_nc[i] >= tol:
            break
        residuals.append(holomorphy_residual(funcs_nc[i], op.curv)["relative"])
    res = np.zeros(len(vals_nc))
    res[: len(residuals)] = residuals
    return _finish(g, funcs_nc, vals_nc, vals_nc[:12], res, tol)


def _nyquist_modes(grid: TorusGrid):
    """Constant and pure-Nyquist grid modes.

    Spectral derivatives annihilate the Nyquist frequency, so these modes are
    exact null vectors of the discrete operator with no continuum meaning;
    they are deflated together with the constants.
    """
    idx = np.indices(grid.shape)
    out = []
    for mask in np.ndindex(*(2,) * grid.ndim):
        out.append(np.prod([(-1.0) ** (idx[a] * mask[a]) for a in range(grid.ndim)], axis=0))
    return np.array(out)


def _kernel_torus(g, tol, n_eig, seed, maxiter=500):
    grid = g.grid
    op = OperatorHandle.build(g)
    n = grid.size
    shape = grid.shape
    w = volume_weights(g)
    wf = w.ravel()
    sym = np.array(grid.flat_laplacian_symbol())
    lap_inv = np.zeros_like(sym)
    lap_inv[sym != 0] = 1.0 / sym[sym != 0]
    c = FLAT_TORUS_GAP
    # A is roughly Lap q Lap with the scalar weight q = w |g^{-1}|^2, so
    # Lap^+ q^{-1} Lap^+ is a Hermitian approximate inverse on the complement
    # of the deflated modes
    q = w * (np.real(np.einsum("ii...->...", g.inv)) / g.m) ** 2

    def A(X):
        X = np.asarray(X).reshape((n, -1))
        cols = X.T.reshape((-1,) + shape)
        out = op.weak_apply(cols, w)
        return out.reshape(cols.shape[0], n).T

    def Bm(X):
        return np.asarray(X).reshape((n, -1)) * wf[:, None]

    def prec(X):
        X = np.asarray(X).reshape((n, -1))
        cols = X.T.reshape((-1,) + shape)
        out = grid.apply_symbol(grid.apply_symbol(cols, lap_inv) / q, lap_inv)
        return out.reshape(cols.shape[0], n).T

    Aop = spla.LinearOperator((n, n), matvec=A, matmat=A, dtype=complex)
    Bop = spla.LinearOperator((n, n), matvec=Bm, matmat=Bm, dtype=complex)
    Mop = spla.LinearOperator((n, n), matvec=prec, matmat=prec, dtype=complex)
    rng = np.random.Generator(np.random.Philox(seed))
    X0 = rng.standard_normal((n, n_eig)) + 1j * rng.standard_normal((n, n_eig))
    Yc = _nyquist_modes(grid).reshape(-1, n).T.astype(complex)
    # residual of a B-normalized vector scales like sqrt(mean w)
    abs_tol = 1e-9 * c * np.sqrt(np.mean(wf))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        vals, vecs, hist = spla.lobpcg(Aop, X0, B=Bop, M=Mop, Y=Yc, largest=False, tol=abs_tol,
                                       maxiter=maxiter, retLambdaHistory=True)
    vals = np.real(vals)
    order = np.argsort(vals)
    vals, vecs = vals[order], vecs[:, order]
    history = [np.real(np.asarray(h)).tolist() for h in hist]
    funcs = vecs.T.reshape((n_eig,) + shape)
    BX = Bm(vecs)
    resid = np.linalg.norm(A(vecs) - BX * vals[None], axis=0) / (np.linalg.norm(BX, axis=0) * np.maximum(vals, c))
    # the kernel vectors and the first eigenvalue above them must be converged;
    # the tail of the block only accelerates the iteration
    n_check = min(int(np.sum(vals < tol)) + 1, n_eig)
    if np.max(resid[:n_check]) > 1e-6:
        raise EigensolverError(f"LOBPCG stagnated (relative residual {np.max(resid[:n_check]):.2e})", history)
    return _finish(g, funcs, vals, vals, resid, tol, history)


# ---------------------------------------------------------------------------
# Transport of holomorphy potentials between metrics, and projections


def transport_potential(u, phi, g) -> np.ndarray:
    """``u + g^{i jbar} dbar_j u d_i phi``.

    For a holomorphy potential ``u`` of ``g`` the result is a holomorphy
    potential of ``g + i d dbar phi`` with the same gradient field.
    """
    metric = g.metric if isinstance(g, CurvatureData) else g
    grid, m = metric.grid, metric.m
    v = values_of(u)
    p = np.real(values_of(phi))
    dbu = np.stack([grid.d_antiholo(v, k) for k in range(m)])
    dphi = np.stack([grid.d_holo(p, k) for k in range(m)])
    return v + np.einsum("ji...,j...,i...->...", metric.inv, dbu, dphi)


def gradient_components(u, g: MetricField):
    """``X^i = g^{i jbar} dbar_j u``."""
    grid, m = g.grid, g.m
    dbu = np.stack([grid.d_antiholo(values_of(u), k) for k in range(m)])
    return np.einsum("ji...,j...->i...", g.inv, dbu)


def vector_norm2(X, g: MetricField):
    """Pointwise ``g_{i jbar} X^i conj(X^j)``."""
    return np.real(np.einsum("ij...,i...,j...->...", g.G, X, np.conj(X)))


def transport_check(u, phi, g: MetricField) -> dict:
    """Gradient agreement and mean preservation for the transformed potential."""
    gt = metric_from_potential(g, phi)
    ut = transport_potential(u, phi, g)
    X = gradient_components(u, g)
    Xt = gradient_components(ut, gt)
    diff = np.sqrt(np.max(vector_norm2(Xt - X, g)))
    scale = np.sqrt(np.max(vector_norm2(X, g)))
    uscale = float(np.sqrt(np.real(integrate_volume(np.abs(values_of(u)) ** 2, g)) / volume(g)))
    mean_t = abs(integrate_volume(ut, gt)) / volume(gt)
    return {
        "gradient_gap": float(diff / scale) if scale > 0 else float(diff),
        "mean_gap": float(mean_t / uscale) if uscale > 0 else float(mean_t),
        "u_tilde": ut,
        "metric": gt,
    }


def project_onto_kernel(f, basis: PotentialBasis):
    """``sum_i (f, u_i) u_i`` over the orthonormal basis (constant included)."""
    v = values_of(f)
    w = volume_weights(basis.metric)
    F = basis.functions.reshape(basis.functions.shape[0], -1)
    coeffs = (np.conj(F) * w.ravel()[None]) @ v.ravel()
    out = (coeffs @ F).reshape(v.shape)
    return out


def principal_angles(funcs_a, funcs_b, g: MetricField):
    """Principal angles (radians) between two function spans in L2(omega^m)."""
    qa = _orthonormalize(funcs_a, g).reshape(funcs_a.shape[0], -1)
    qb = _orthonormalize(funcs_b, g).reshape(funcs_b.shape[0], -1)
    w = volume_weights(g).ravel()
    Mx = (np.conj(qa) * w[None]) @ qb.T
    s = np.clip(np.linalg.svd(Mx, compute_uv=False), 0.0, 1.0)
    return np.arccos(s)
