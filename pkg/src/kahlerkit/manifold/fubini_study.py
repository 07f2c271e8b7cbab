"""Analytic Fubini-Study data on the affine chart of CP^m.

Normalization: ``g = (1/2 pi) d dbar log(1 + |z|^2)``, so the hyperplane class
has volume one.  With this choice the curvature tensor is

    Theta[a, b, k, l] = 2 pi (delta_ab g_{k lbar} + delta_ak g_{b lbar}),

in the convention ``Theta = -dbar(H^{-1} d H)``, ``H = G^T``, matrix index
``[a, b]`` = (upper, lower).
"""

from __future__ import annotations

import numpy as np

from .fields import MetricField


def fs_metric_at(z):
    """Fubini-Study ``g_{i jbar}`` at chart points ``z`` of shape (m, *pts)."""
    z = np.asarray(z, dtype=complex)
    m = z.shape[0]
    a2 = np.abs(z) ** 2
    r2 = np.sum(a2, axis=0)
    num = -np.conj(z)[:, None] * z[None, :]
    for i in range(m):
        # 1 + sum_{k != i} |z_k|^2 without cancellation at large |z_i|
        num[i, i] = 1 + r2 - a2[i]
    return num / (2 * np.pi * (1 + r2) ** 2)


def fs_curvature_at(z):
    """Closed-form curvature tensor ``Theta[a, b, k, l]`` at chart points."""
    G = fs_metric_at(z)
    m = G.shape[0]
    eye = np.eye(m)
    pts = (1,) * (G.ndim - 2)
    d_ab = eye.reshape((m, m, 1, 1) + pts)
    d_ak = eye.reshape((m, 1, m, 1) + pts)
    return 2 * np.pi * (d_ab * G[None, None] + d_ak * G[None, :, None, :])


class CP2AnalyticGrid:
    """Quadrature nodes on the affine chart of CP^2 carrying analytic FS data only.

    Points are ``z = tan(chi) (cos(psi) e^{i beta_1}, sin(psi) e^{i beta_2})`` with
    Gauss-Legendre nodes in ``chi`` and ``psi`` on (0, pi/2) and uniform nodes in
    the two phases.  In these variables the Fubini-Study integrands are smooth
    trigonometric polynomials, so the quadrature converges spectrally.  The
    chart misses a line, which has measure zero.  There is no differentiation
    on this grid.

    Pointwise data at each node are expressed in the standard affine chart in
    which the largest homogeneous coordinate equals one, so every local
    coordinate has modulus at most one and no entry of the metric degenerates.
    Integration weights carry the Jacobian back to the quadrature chart.
    """

    tag = "cp2-analytic"
    m = 2

    def __init__(self, n_alpha: int = 24, n_beta: int = 3):
        self.n_alpha, self.n_beta = n_alpha, n_beta
        x, wx = np.polynomial.legendre.leggauss(n_alpha)
        ang = (x + 1) * np.pi / 4
        wang = wx * np.pi / 4
        beta = 2 * np.pi * np.arange(n_beta) / n_beta
        CHI, PSI, B1, B2 = np.meshgrid(ang, ang, beta, beta, indexing="ij")
        WC, WP = np.meshgrid(wang, wang, indexing="ij")
        self.shape = CHI.shape
        R = np.tan(CHI)
        self.zs = np.array([R * np.cos(PSI) * np.exp(1j * B1), R * np.sin(PSI) * np.exp(1j * B2)])
        # r1 r2 dr1 dr2 = R^3 cos(psi) sin(psi) dR dpsi,  dR = dchi / cos^2(chi)
        jac = R ** 3 * np.cos(PSI) * np.sin(PSI) / np.cos(CHI) ** 2
        Z = np.array([np.ones(self.shape, complex), self.zs[0], self.zs[1]])
        j = np.argmax(np.abs(Z), axis=0)
        Zj = np.take_along_axis(Z, j[None], axis=0)[0]
        keep = np.array([[1, 2], [0, 2], [0, 1]])[j]  # homogeneous indices kept in chart j
        self.local = np.array([np.take_along_axis(Z, keep[None, ..., c], axis=0)[0] / Zj for c in range(2)])
        self.chart = j
        # top-form coefficients transform by |det d z_local / d z|^2 = |Z_j|^-6
        self._w = jac * (WC * WP)[:, :, None, None] * (2 * np.pi / n_beta) ** 2 / np.abs(Zj) ** 6

    def __repr__(self):
        return f"CP2AnalyticGrid(n_alpha={self.n_alpha}, n_beta={self.n_beta})"

    def spec(self):
        return {"manifold": "cp2-analytic", "m": 2, "n_alpha": self.n_alpha, "n_beta": self.n_beta}

    @property
    def size(self):
        return int(np.prod(self.shape))

    def integrate_coordinate(self, f):
        f = np.asarray(f)
        out = f * self._w
        for ax in range(f.ndim - 1, f.ndim - 5, -1):
            out = np.sum(out, axis=ax)
        return out

    def coordinate_weights(self):
        return self._w

    def ref_frame(self):
        return fs_metric_at(self.local), None, fs_curvature_at(self.local)

    def hessian(self, f):
        raise NotImplementedError("the CP^2 grid carries analytic data only")

    rel_hessian = hessian

    def d_holo(self, f, k):
        raise NotImplementedError("the CP^2 grid carries analytic data only")

    d_antiholo = d_holo


def fubini_study(m: int, points=None, n_alpha: int = 24):
    """Fubini-Study metric and analytic curvature.

    Parameters
    ----------
    m : int
        1 or 2.
    points : array_like, optional
        Chart points of shape (m, *pts).  When omitted for m = 2 a
        :class:`CP2AnalyticGrid` is built and a :class:`MetricField` returned.

    Returns
    -------
    (G, Theta) for explicit points, or (MetricField, Theta) on the CP^2 grid.
    """
    if m not in (1, 2):
        raise ValueError("Fubini-Study data provided for m = 1 or 2")
    if points is not None:
        z = np.asarray(points, dtype=complex)
        if z.shape[0] != m:
            raise ValueError(f"points must have leading axis of length {m}")
        return fs_metric_at(z), fs_curvature_at(z)
    if m == 2:
        grid = CP2AnalyticGrid(n_alpha)
        G, _, Theta = grid.ref_frame()
        eye = np.zeros_like(G)
        eye[0, 0] = eye[1, 1] = 1
        return MetricField(grid, G, rel=eye), Theta
    from .calculus import reference_metric
    from .grids import ChartGrid

    grid = ChartGrid()
    _, _, Theta = grid.ref_frame()
    return reference_metric(grid), Theta
