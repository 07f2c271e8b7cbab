"""Holomorphy potentials, Poisson brackets, Bando characters and the perturbed Mabuchi energy.

Sign and normalization conventions used throughout:

* ``grad' u = g^{i jbar} dbar_j u d_i`` and the total character is
  ``F_t(grad' u) = -(1 / 2 m pi) int u S(omega, t) omega^m`` for mean-zero ``u``.
* ``S(omega, t)`` averages to ``2 m pi sigma(t)``; the Mabuchi integrand and the
  flow use ``S - 2 m pi sigma(t)`` so that critical points are constant ``S``.
* ``nu_t(omega_1) = -int_0^1 ds int phidot_s (S(omega_s, t) - 2 m pi sigma) omega_s^m``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .curvature import CurvatureData, curvature, perturbed_scalar, sigma
from .lichnerowicz import dbar_hessian, gradient_components, tensor_norm2, vector_norm2
from .manifold.calculus import integrate_volume, metric_from_potential, solve_poisson, volume
from .manifold.fields import MetricField, values_of
from .manifold.grids import ChartGrid

SPECTRAL_HOLOMORPHY_TOL = 1e-8
CHART_HOLOMORPHY_TOL = 1e-5
MEAN_TOL = 1e-8


class InvariantError(ValueError):
    pass


def holomorphy_tol(grid) -> float:
    return CHART_HOLOMORPHY_TOL if isinstance(grid, ChartGrid) else SPECTRAL_HOLOMORPHY_TOL


@dataclass
class HolomorphicVectorField:
    """A (1,0) vector field with its holomorphy residual and optional potential.

    ``residual`` is the sup over nodes of the pointwise g-norm of dbar X.
    """

    metric: MetricField
    components: np.ndarray  # (m, *grid)
    residual: float
    potential: np.ndarray | None = None

    @property
    def accepted(self) -> bool:
        return self.residual <= holomorphy_tol(self.metric.grid)

    def apply(self, f):
        """Derivative ``X(f) = X^i d_i f``."""
        grid = self.metric.grid
        v = values_of(f)
        return sum(self.components[i] * grid.d_holo(v, i) for i in range(self.metric.m))


def gradient_field(u, g) -> HolomorphicVectorField:
    """``grad' u`` with the size of ``dbar grad' u``.

    For gradient fields ``|dbar grad' u|_g`` equals the g-norm of the
    antiholomorphic Hessian, which is regular on every chart, so the residual is
    computed that way.
    """
    curv = g if isinstance(g, CurvatureData) else curvature(g)
    metric = curv.metric
    v = values_of(u)
    X = gradient_components(v, metric)
    res = float(np.sqrt(np.max(tensor_norm2(dbar_hessian(v, curv), metric))))
    return HolomorphicVectorField(metric, X, res, potential=v)


def vector_field(components, g: MetricField) -> HolomorphicVectorField:
    """Wrap explicit components ``X^i``; residual from ``d_jbar X^i`` in the g-norm."""
    grid, m = g.grid, g.m
    X = np.asarray(components, dtype=complex)
    dX = np.stack([np.stack([grid.d_antiholo(X[i], j) for j in range(m)]) for i in range(m)])  # [i, j]
    # |dbar X|^2 = g_{i kbar} g^{l jbar} dX[i, j] conj(dX[k, l])
    n2 = np.real(np.einsum("ik...,jl...,ij...,kl...->...", g.G, g.inv, dX, np.conj(dX)))
    return HolomorphicVectorField(g, X, float(np.sqrt(np.max(n2))))


def poisson_bracket(u, v, g: MetricField):
    """``{u, v} = g^{i jbar} (dbar_j u d_i v - dbar_j v d_i u)``; imaginary for real ``u, v``."""
    grid, m = g.grid, g.m
    a, b = values_of(u), values_of(v)
    da = np.stack([grid.d_holo(a, k) for k in range(m)])
    db = np.stack([grid.d_holo(b, k) for k in range(m)])
    dba = np.stack([grid.d_antiholo(a, k) for k in range(m)])
    dbb = np.stack([grid.d_antiholo(b, k) for k in range(m)])
    return np.einsum("ji...,j...,i...->...", g.inv, dba, db) - np.einsum("ji...,j...,i...->...", g.inv, dbb, da)


# ---------------------------------------------------------------------------
# Bando characters


def _check_potential(v, curv, strict=True):
    metric = curv.metric
    vol = volume(metric)
    scale = max(float(np.sqrt(np.real(integrate_volume(np.abs(v) ** 2, metric)) / vol)), 1e-300)
    mean = abs(integrate_volume(v, metric)) / vol
    if mean > MEAN_TOL * scale:
        raise InvariantError(f"potential is not mean-zero (mean {mean:.2e}, rms {scale:.2e})")
    if strict:
        res = float(np.sqrt(np.max(tensor_norm2(dbar_hessian(v, curv), metric))))
        tol = holomorphy_tol(metric.grid) * max(scale, 1.0)
        if res > tol:
            raise InvariantError(f"gradient of the potential is not holomorphic (residual {res:.2e} > {tol:.1e})")


def bando_total(u, g, t: float, strict: bool = True) -> complex:
    """Total character ``F_t(grad' u) = -(1/2 m pi) int u S(omega, t) omega^m``.

    Raises
    ------
    InvariantError
        If ``u`` is not mean-zero, or (with ``strict``) its gradient is not
        holomorphic: the pairing is only the character on holomorphy potentials.
    """
    curv = g if isinstance(g, CurvatureData) else curvature(g)
    metric = curv.metric
    v = values_of(u)
    _check_potential(v, curv, strict)
    S = perturbed_scalar(curv, t, check_admissible=False).S.values
    return complex(-integrate_volume(v * S, metric) / (2 * metric.m * np.pi))


def bando_f1_via_potential(X: HolomorphicVectorField, g=None) -> complex:
    """``f_1(X) = int X(F_1) omega`` with ``Lap F_1 = S / 2 pi - sigma`` (complex dimension one).

    The harmonic part of ``c_1`` on a surface is ``sigma omega``, so
    ``i d dbar F_1 = c_1 - H c_1`` becomes the scalar Poisson problem above.
    """
    metric = X.metric if g is None else (g.metric if isinstance(g, CurvatureData) else g)
    if metric.m != 1:
        raise InvariantError("the potential route is implemented for complex dimension one")
    curv = g if isinstance(g, CurvatureData) else curvature(metric)
    S = perturbed_scalar(curv, 0.0, check_admissible=False).S.values
    sig = sigma(curv, 0.0)
    rhs = S / (2 * np.pi) - sig
    rhs = rhs - integrate_volume(rhs, metric) / volume(metric)
    F1 = solve_poisson(rhs, metric).values
    return complex(integrate_volume(X.apply(F1), metric))


def character_report(u, g, t: float) -> dict:
    """Both routes on complex dimension one; only ``F_t`` otherwise."""
    curv = g if isinstance(g, CurvatureData) else curvature(g)
    out = {"F_t": bando_total(u, curv, t)}
    if curv.m == 1:
        out["f1_potential"] = bando_f1_via_potential(gradient_field(u, curv), curv)
        out["f1_pairing"] = bando_total(u, curv, 0.0)
    return out


# ---------------------------------------------------------------------------
# Kahler paths and the Mabuchi energy


@dataclass
class KahlerPath:
    """``omega_s = omega_0 + i d dbar phi_s`` for ``s`` in [0, 1], with ``phi_0 = 0`` up to a constant.

    ``potential(s)`` and ``velocity(s)`` return grid arrays.
    """

    base: MetricField
    potential: Callable[[float], np.ndarray]
    velocity: Callable[[float], np.ndarray]
    label: str = "path"
    pieces: tuple = ()  # smooth segments of a concatenation, integrated separately

    @classmethod
    def linear(cls, base, phi_a, phi_b=None):
        """Straight segment from ``phi_a`` to ``phi_b`` (from 0 to ``phi_a`` if ``phi_b`` is omitted)."""
        if phi_b is None:
            phi_a, phi_b = np.zeros(base.grid.shape), phi_a
        a, b = np.real(values_of(phi_a)), np.real(values_of(phi_b))
        return cls(base, lambda s: a + s * (b - a), lambda s: b - a, "linear")

    @classmethod
    def cubic(cls, base, phi_a, phi_b=None):
        """The same segment traversed with speed ``r'(s)``, ``r = 3 s^2 - 2 s^3``."""
        if phi_b is None:
            phi_a, phi_b = np.zeros(base.grid.shape), phi_a
        a, b = np.real(values_of(phi_a)), np.real(values_of(phi_b))
        return cls(base, lambda s: a + (3 * s ** 2 - 2 * s ** 3) * (b - a),
                   lambda s: (6 * s - 6 * s ** 2) * (b - a), "cubic")

    @classmethod
    def detour(cls, base, phi_b, bump):
        """``s phi_b + s (1 - s) bump``: same endpoints, different interior."""
        b, c = np.real(values_of(phi_b)), np.real(values_of(bump))
        return cls(base, lambda s: s * b + s * (1 - s) * c, lambda s: b + (1 - 2 * s) * c, "detour")

    def reversed(self):
        if self.pieces:
            parts = tuple(p.reversed() for p in reversed(self.pieces))
            return KahlerPath(self.base, lambda s: self.potential(1 - s), lambda s: -self.velocity(1 - s),
                              self.label + "-reversed", parts)
        return KahlerPath(self.base, lambda s: self.potential(1 - s), lambda s: -self.velocity(1 - s),
                          self.label + "-reversed")

    def then(self, other: "KahlerPath"):
        """Concatenation traversed at double speed."""
        def pot(s):
            return self.potential(2 * s) if s <= 0.5 else other.potential(2 * s - 1)

        def vel(s):
            return 2 * self.velocity(2 * s) if s < 0.5 else 2 * other.velocity(2 * s - 1)

        parts = (self.pieces or (self,)) + (other.pieces or (other,))
        return KahlerPath(self.base, pot, vel, f"{self.label}+{other.label}", parts)

    def metric(self, s: float) -> MetricField:
        return metric_from_potential(self.base, self.potential(s))


def _integrand(path: KahlerPath, s: float, t: float, target: float) -> float:
    g = path.metric(s)
    S = perturbed_scalar(g, t, check_admissible=False).S.values
    return float(-np.real(integrate_volume(path.velocity(s) * (S - target), g)))


@dataclass
class MabuchiResult:
    value: float
    nodes: int
    richardson_gap: float
    converged: bool
    history: list = field(default_factory=list)


def mabuchi_energy(path: KahlerPath, t: float, tol: float = 1e-8, start_nodes: int = 9,
                   max_nodes: int = 513, workers: int = 1) -> MabuchiResult:
    """``nu_t`` at the end of ``path`` by composite Simpson in ``s``.

    The node count doubles until successive Simpson values differ by less than
    ``15 tol`` (Richardson estimate of the finer value's error below ``tol``).
    Samples are evaluated independently and, with ``workers > 1``, on a
    thread pool; the reduction order is fixed.  A concatenated path has a
    kink at each junction, so its segments are integrated one by one.
    """
    if start_nodes < 5 or start_nodes % 2 == 0:
        raise ValueError("start_nodes must be odd and >= 5")
    if path.pieces:
        parts = [mabuchi_energy(p, t, tol / len(path.pieces), start_nodes, max_nodes, workers) for p in path.pieces]
        return MabuchiResult(float(sum(r.value for r in parts)), sum(r.nodes for r in parts),
                             float(sum(r.richardson_gap for r in parts)), all(r.converged for r in parts),
                             [r.history for r in parts])
    g0 = path.base
    target = 2 * g0.m * np.pi * sigma(curvature(g0), t)
    cache: dict[float, float] = {}

    def sample(svals):
        todo = [s for s in svals if s not in cache]
        if workers > 1 and len(todo) > 1:
            with ThreadPoolExecutor(max_workers=workers) as ex:
                vals = list(ex.map(lambda s: _integrand(path, s, t, target), todo))
        else:
            vals = [_integrand(path, s, t, target) for s in todo]
        cache.update(zip(todo, vals))
        return np.array([cache[s] for s in svals])

    def simpson(n):
        s = np.linspace(0.0, 1.0, n)
        f = sample([float(x) for x in s])
        h = 1.0 / (n - 1)
        return h / 3 * (f[0] + f[-1] + 4 * np.sum(f[1:-1:2]) + 2 * np.sum(f[2:-1:2]))

    n = start_nodes
    prev = simpson(n)
    history = [(n, prev)]
    gap = np.inf
    while n < max_nodes:
        n = 2 * n - 1
        cur = simpson(n)
        history.append((n, cur))
        gap = abs(cur - prev) / 15
        prev = cur
        if gap < tol:
            return MabuchiResult(float(cur), n, float(gap), True, history)
    return MabuchiResult(float(prev), n, float(gap), False, history)


def mabuchi_between(base: MetricField, phi_a, phi_b, t: float, **kw) -> float:
    """``M_t(omega_a, omega_b)`` along the straight segment of potentials."""
    return mabuchi_energy(KahlerPath.linear(base, phi_a, phi_b), t, **kw).value


def mabuchi_derivative_check(g: MetricField, u, t: float, step: float | None = None,
                             require_holomorphic: bool = True, **kw) -> dict:
    """Compare ``d nu_t / dr`` along ``phi_r = r u`` at ``r = 0`` with ``2 m pi F_t(grad' u)``.

    The derivative uses the fourth-order central stencil on
    ``r in {-2h, -h, h, 2h}``; each value is a full path quadrature.
    """
    v = values_of(u)
    scale = float(np.max(np.abs(v)))
    if float(np.max(np.abs(np.imag(v)))) > 1e-10 * max(scale, 1e-300):
        raise InvariantError("the variation direction must be a real function")
    v = np.real(v)
    if scale == 0.0:
        return {"lhs": 0.0, "rhs": 0.0, "gap": 0.0, "tolerance": 1e-6, "pass": True}
    h = step if step is not None else 2e-3 / scale
    vals = {}
    for r in (-2, -1, 1, 2):
        vals[r] = mabuchi_energy(KahlerPath.linear(g, r * h * v), t, **kw).value
    lhs = (8 * (vals[1] - vals[-1]) - (vals[2] - vals[-2])) / (12 * h)
    rhs = 2 * g.m * np.pi * bando_total(v - integrate_volume(v, g) / volume(g), g, t, strict=require_holomorphic)
    gap = abs(lhs - rhs)
    tol = max(1e-6, 1e-4 * abs(rhs))
    return {"lhs": float(lhs), "rhs": complex(rhs), "gap": float(gap), "tolerance": tol, "pass": bool(gap <= tol)}


def potential_gradient_norm(u, g: MetricField) -> float:
    """Sup of ``|grad' u|_g``."""
    return float(np.sqrt(np.max(vector_norm2(gradient_components(u, g), g))))
