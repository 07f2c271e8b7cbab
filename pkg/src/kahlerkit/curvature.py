"""Curvature, Chern forms and the perturbed scalar curvature of a metric field.

Conventions
-----------
The connection matrix is ``A_k = H^{-1} d_k H`` with ``H = G^T`` and the
curvature is ``Theta_{k lbar} = -dbar_l A_k``; ``Theta[a, b, k, l]`` stores the
endomorphism entry (row a upper, column b lower) of the (1,1)-coefficient at
``dz^k ^ dzbar^l``.  The Chern forms are the coefficients of
``det(I + t (i/2 pi) Theta)`` and the perturbed scalar curvature ``S`` solves

    S omega^m / (2 m pi) = sum_k t^(k-1) c_k ^ omega^(m-k).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .exterior import MatrixPQForm, PQForm, char_coefficients, form_det, mixed_cm, power, wedge
from .manifold.calculus import integrate, integrate_volume, volume
from .manifold.fields import MetricField, ScalarField, _inv
from .manifold.grids import ChartGrid, TorusGrid


class CurvatureError(ValueError):
    pass


class AdmissibilityWarning(UserWarning):
    pass


@dataclass
class CurvatureData:
    metric: MetricField
    connection: np.ndarray | None  # [k, a, b, *field]
    theta: np.ndarray  # [a, b, k, l, *field]
    chern: list = field(default_factory=list)  # PQForm c_0 .. c_m

    @property
    def m(self):
        return self.metric.m

    def curvature_form(self, scale=1.0) -> MatrixPQForm:
        """``scale * (i / 2 pi) Theta`` as a matrix of (1,1)-forms."""
        return MatrixPQForm(self.m, 1, 1, (scale * 1j / (2 * np.pi)) * self.theta)

    @property
    def ricci_form(self) -> PQForm:
        """``i tr Theta``, equal to ``2 pi c_1``."""
        tr = sum(self.theta[a, a] for a in range(self.m))
        return PQForm(self.m, 1, 1, 1j * tr)


def _connection_and_curvature(g: MetricField):
    grid = g.grid
    m = g.m
    _, A_ref, Theta_ref = grid.ref_frame()
    if isinstance(grid, (TorusGrid, ChartGrid)):
        P = g.rel
        if m == 1:
            p = np.real(P[0, 0])
            A = A_ref + (grid.d_holo(p, 0) / p)[None, None, None]
            # -dbar d log p through the real second-order operator keeps Theta real
            Theta = Theta_ref - grid.hessian(np.log(p))[None, None]
            return A, Theta
        if np.any(A_ref):
            raise CurvatureError("non-flat reference frames are only supported in one dimension")
        # torus: the reference frame is the identity and P = G^T.  Use the
        # lowered tensor R_{b cbar k lbar} = -d_k dbar_l g_{b cbar}
        #   + g^{q pbar} d_k g_{b pbar} dbar_l g_{q cbar},
        # whose Hermitian symmetry survives discretization, then raise with g^{-1}.
        G = g.G
        Ginv = g.inv  # Ginv[c, a] = g^{a cbar}
        dG = np.stack([np.stack([np.stack([grid.d_holo(G[b, c], k) for c in range(m)])
                                 for b in range(m)]) for k in range(m)])  # [k, b, c]
        dbG = np.conj(np.swapaxes(dG, 1, 2))  # dbar_l g_{q cbar} = conj(d_l g_{c qbar})
        A = np.einsum("ca...,kbc...->kab...", Ginv, dG)
        R = np.empty((m, m, m, m) + grid.shape, complex)  # [b, c, k, l]
        for k in range(m):
            for l in range(m):
                ddG = np.stack([np.stack([grid.d_antiholo(dG[k, b, c], l) for c in range(m)]) for b in range(m)])
                R[:, :, k, l] = -ddG + np.einsum("pq...,bp...,qc...->bc...", Ginv, dG[k], dbG[l])
        Theta = np.einsum("ca...,bckl...->abkl...", Ginv, R)
        return A, Theta
    # analytic-only grids carry their own (reference) metric
    if not np.allclose(g.rel, np.eye(m).reshape((m, m) + (1,) * len(grid.shape)), atol=1e-14):
        raise CurvatureError("analytic grids support only their reference metric")
    return None, Theta_ref


def curvature(g: MetricField) -> CurvatureData:
    """Connection, curvature tensor and Chern forms of ``g``."""
    A, Theta = _connection_and_curvature(g)
    data = CurvatureData(g, A, Theta)
    data.chern = char_coefficients(data.curvature_form())
    return data


def _as_curvature(g_or_curv):
    return g_or_curv if isinstance(g_or_curv, CurvatureData) else curvature(g_or_curv)


# ---------------------------------------------------------------------------
# perturbed scalar curvature


@dataclass
class PerturbedScalar:
    t: float
    S: ScalarField
    sigma: float
    calabi_energy: float
    mean_S: float
    warning: str | None = None


def chern_sum(curv: CurvatureData, t: float) -> PQForm:
    """``sum_k t^(k-1) c_k ^ omega^(m-k)``, a top form."""
    m = curv.m
    omega = curv.metric.kahler_form()
    total = None
    for k in range(1, m + 1):
        term = wedge(curv.chern[k], power(omega, m - k)) * (t ** (k - 1))
        total = term if total is None else total + term
    return total


def determinant_route(curv: CurvatureData, t: float) -> PQForm:
    """``(det(omega I + t (i/2pi) Theta) - omega^m) / t``; the t -> 0 limit at t = 0."""
    m = curv.m
    omega = curv.metric.kahler_form()
    omegaI = MatrixPQForm.scalar_times_identity(omega)
    if t == 0:
        return mixed_cm(curv.curvature_form(), *([omegaI] * (m - 1))) * m
    full = form_det(omegaI + curv.curvature_form(t))
    return (full - power(omega, m)) * (1.0 / t)


def _top_ratio(num: PQForm, g: MetricField):
    """Pointwise ``num / omega^m`` for a top form ``num``."""
    m = g.m
    omega_m = power(g.kahler_form(), m).top()
    if np.min(np.abs(omega_m)) == 0:
        raise CurvatureError("omega^m vanishes at a node; metric is degenerate")
    return num.top() / omega_m


def scalar_from_top(num: PQForm, g: MetricField):
    return np.real_if_close(2 * g.m * np.pi * _top_ratio(num, g), tol=1e6)


def perturbed_scalar(g, t: float, route: str = "chern", check_admissible: bool = True) -> PerturbedScalar:
    """Perturbed scalar curvature ``S(omega, t)`` with its average data.

    Parameters
    ----------
    g : MetricField or CurvatureData
    t : float
    route : {"chern", "determinant"}
        The Chern-sum expansion is the primary route; the determinant route
        is kept as an independent cross-check.
    check_admissible : bool
        Attach a warning when ``t`` fails the pointwise admissibility test.
    """
    curv = _as_curvature(g)
    metric = curv.metric
    num = chern_sum(curv, t) if route == "chern" else determinant_route(curv, t)
    S = 2 * metric.m * np.pi * _top_ratio(num, metric)
    imag = float(np.max(np.abs(np.imag(S))))
    scale = max(float(np.max(np.abs(S))), 1.0)
    if imag > 1e-8 * scale:
        raise CurvatureError(f"perturbed scalar curvature has imaginary part {imag:.2e}")
    S = np.real(S)
    sig = sigma(curv, t)
    mean_S = float(np.real(integrate_volume(S, metric))) / volume(metric)
    target = 2 * metric.m * np.pi * sig
    cal = float(np.real(integrate_volume((S - target) ** 2, metric)))
    warn = None
    if check_admissible:
        rep = admissible_t(curv, t)
        if not rep["ok"]:
            warn = f"t={t} outside the pointwise admissible range (margin {rep['margin']:.3e})"
            warnings.warn(warn, AdmissibilityWarning, stacklevel=2)
    return PerturbedScalar(t, ScalarField(metric.grid, S, real=True, name="S"), sig, cal, mean_S, warn)


def chern_numbers(g) -> list:
    """``int c_k ^ omega^(m-k)`` for k = 0..m."""
    curv = _as_curvature(g)
    omega = curv.metric.kahler_form()
    m = curv.m
    return [float(np.real(integrate(wedge(curv.chern[k], power(omega, m - k)), curv.metric.grid)))
            for k in range(m + 1)]


def sigma(g, t: float) -> float:
    """Cohomological average ``sum_k t^(k-1) int c_k ^ omega^(m-k) / int omega^m``.

    The volume-form average of ``S(omega, t)`` equals ``2 m pi sigma(t)``.
    """
    nums = chern_numbers(g)
    m = len(nums) - 1
    return float(sum(t ** (k - 1) * nums[k] for k in range(1, m + 1)) / nums[0])


def calabi_energy(g, t: float) -> float:
    ps = perturbed_scalar(g, t)
    return ps.calabi_energy


# ---------------------------------------------------------------------------
# admissibility of the perturbed pairing


def _unitary_frame(G):
    """``B = L^{-T}`` per node with ``G = L L^H``, so that ``B^T G conj(B) = I``."""
    Gm = np.moveaxis(G, (0, 1), (-2, -1))
    L = np.linalg.cholesky(Gm)
    B = np.swapaxes(np.linalg.inv(L), -1, -2)
    return np.moveaxis(B, (-2, -1), (0, 1))


def pairing_matrix(g, t: float):
    """Pointwise Hermitian matrix of the perturbed pairing in a unitary frame.

    Index ``(a, b)`` labels the elementary tensor ``e_a (x) dz^b`` in the
    conjugated slot, ``(c, d)`` labels ``e_c (x) dzbar^d`` in the other; the
    entry is ``m c_m(E, Omega_t, ..., Omega_t) / omega^m`` with
    ``Omega_t = omega I + t (i/2pi) Theta``.  Returns shape ``(m^2, m^2, *field)``.
    """
    curv = _as_curvature(g)
    metric = curv.metric
    m = curv.m
    field_shape = metric.grid.shape
    B = _unitary_frame(metric.G)
    Binv = _inv(B)
    # curvature in the unitary frame: endomorphism B^{-1} Theta B, form B^T C conj(B)
    Th = np.einsum("ap...,pqkl...,qb...->abkl...", Binv, curv.theta, B)
    Th = np.einsum("kr...,abkl...,ls...->abrs...", B, Th, np.conj(B))
    eye = np.eye(m, dtype=complex).reshape((m, m) + (1,) * len(field_shape))
    omega_u = PQForm(m, 1, 1, np.broadcast_to(1j * eye, (m, m) + field_shape).copy())
    Omega = MatrixPQForm.scalar_times_identity(omega_u) + MatrixPQForm(m, 1, 1, (t * 1j / (2 * np.pi)) * Th)
    vol = power(omega_u, m).top()
    H = np.zeros((m * m, m * m) + field_shape, complex)
    for a in range(m):
        for b in range(m):
            for c in range(m):
                for d in range(m):
                    E = np.zeros((m, m, m, m) + field_shape, complex)
                    E[c, a, b, d] = 1j / (2 * np.pi)
                    Ef = MatrixPQForm(m, 1, 1, E)
                    val = mixed_cm(Ef, *([Omega] * (m - 1))) * m if m > 1 else Ef.entry(0, 0) * 1
                    H[a * m + b, c * m + d] = val.top() / vol
    return H


def admissible_t(g, t: float) -> dict:
    """Check positivity of the perturbed pairing at every node.

    Returns
    -------
    dict with ``ok`` (bool), ``margin`` (smallest eigenvalue over the grid),
    ``worst_node`` and ``hermitian_defect``.
    """
    H = pairing_matrix(g, t)
    Hm = np.moveaxis(H, (0, 1), (-2, -1))
    defect = float(np.max(np.abs(Hm - np.conj(np.swapaxes(Hm, -1, -2)))))
    Hh = 0.5 * (Hm + np.conj(np.swapaxes(Hm, -1, -2)))
    ev = np.linalg.eigvalsh(Hh)[..., 0]
    idx = np.unravel_index(int(np.argmin(ev)), ev.shape)
    margin = float(ev[idx])
    return {"ok": bool(margin > 0), "margin": margin, "worst_node": [int(i) for i in idx],
            "hermitian_defect": defect, "t": float(t)}


def admissible_threshold(g, lo: float, hi: float, tol: float = 1e-10) -> float:
    """Bisect for the sign change of the admissibility margin between ``lo`` and ``hi``.

    ``lo`` must be admissible and ``hi`` not (or vice versa).
    """
    f_lo = admissible_t(g, lo)["margin"]
    f_hi = admissible_t(g, hi)["margin"]
    if (f_lo > 0) == (f_hi > 0):
        raise ValueError("margin does not change sign on the bracket")
    while abs(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        f_mid = admissible_t(g, mid)["margin"]
        if (f_mid > 0) == (f_lo > 0):
            lo, f_lo = mid, f_mid
        else:
            hi, f_hi = mid, f_mid
    return 0.5 * (lo + hi)
