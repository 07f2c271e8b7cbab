"""Gradient descent of the Kempf-Ness function ``h = log |x|^2`` along a complex orbit."""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.optimize import least_squares

from .actions import LinearAction, kempf_ness_h, moment_map
from .conventions import ARMIJO, GRAD_TOL, GRADIENT_CONSTANT, H_FLOOR


class BudgetExhausted(RuntimeError):
    pass


@dataclass
class OrbitState:
    """Point on the orbit with the accumulated complex group element.

    ``steps`` holds the complexified Lie algebra elements ``zeta`` with
    ``x_new = exp(rho^c(zeta)) x_old``.
    """

    x: np.ndarray
    g: np.ndarray
    h: float
    grad_norm: float
    steps: list = field(default_factory=list)
    h_history: list = field(default_factory=list)
    decrements: list = field(default_factory=list)


@dataclass
class DescentResult:
    verdict: str  # polystable | unstable | budget
    state: OrbitState
    minimizer: np.ndarray | None
    escape_direction: np.ndarray | None
    moment: np.ndarray
    monotone: bool

    def record(self) -> dict:
        def cplx(v):
            return None if v is None else [[float(np.real(c)), float(np.imag(c))] for c in np.ravel(v)]

        return {
            "verdict": self.verdict,
            "h": self.state.h,
            "grad_norm": self.state.grad_norm,
            "steps": len(self.state.steps),
            "minimizer": cplx(self.minimizer),
            "escape_direction": None if self.escape_direction is None else [float(v) for v in self.escape_direction],
            "moment": [float(v) for v in self.moment],
            "monotone": self.monotone,
        }


def h_gradient(action: LinearAction, x):
    """Gradient of ``xi -> h(exp(i rho(xi)) x)`` at ``xi = 0``."""
    x = np.asarray(x, dtype=complex)
    return GRADIENT_CONSTANT * moment_map(action, x) / float(np.real(np.vdot(x, x)))


def _profile(action, x, xi):
    # h(exp(i s rho(xi)) x) = log sum_j exp(2 s lam_j) |c_j|^2 with i rho(xi) = U diag(lam) U^H
    herm = 1j * action.rho(np.asarray(xi, float))
    lam, U = np.linalg.eigh(0.5 * (herm + herm.conj().T))
    c2 = np.abs(U.conj().T @ np.asarray(x, complex)) ** 2
    keep = c2 > 0
    return lam[keep], c2[keep]


def h_along(action, x, xi, s):
    """``h(exp(i s rho(xi)) x)`` for an array of ``s``, evaluated spectrally."""
    lam, c2 = _profile(action, x, xi)
    s = np.asarray(s, float)
    z = 2.0 * s[..., None] * lam + np.log(c2)
    top = np.max(z, axis=-1, keepdims=True)
    return (top + np.log(np.sum(np.exp(z - top), axis=-1, keepdims=True)))[..., 0]


def gradient_identity_gap(action: LinearAction, x, xi) -> dict:
    """Compare ``d/ds h(exp(i s rho(xi)) x)`` at 0, from the spectral profile,
    with ``GRADIENT_CONSTANT <mu(x), xi> / |x|^2``."""
    lam, c2 = _profile(action, x, xi)
    lhs = float(np.sum(2 * lam * c2) / np.sum(c2))
    rhs = float(np.dot(h_gradient(action, x), xi))
    return {"directional_derivative": lhs, "moment_pairing": rhs, "gap": abs(lhs - rhs)}


def curvature_bound(action: LinearAction) -> float:
    """Upper bound for ``d^2/ds^2 h(exp(i s rho(xi)) x)`` over unit ``xi``.

    The second derivative is four times a variance of eigenvalues of
    ``i rho(xi)``, so it is at most the squared spectral spread.
    """
    norms = [np.linalg.norm(B, 2) for B in action.basis]
    return float(4.0 * sum(n ** 2 for n in norms)) or 1.0


def kempf_ness_descend(action: LinearAction, x0, budget: int = 500, grad_tol: float = GRAD_TOL,
                       h_floor: float = H_FLOOR, raise_on_budget: bool = False):
    """Backtracking gradient descent of ``h`` over the directions ``i xi``.

    Verdicts: ``polystable`` when the gradient norm drops below ``grad_tol``;
    ``unstable`` when ``h`` falls below ``h_floor`` (the orbit closure reaches
    zero); ``budget`` when neither happens within ``budget`` steps.

    Each line search starts from the Newton step of the exactly known
    profile of ``h`` along the search direction and backtracks with an
    Armijo test.
    """
    x = np.asarray(x0, dtype=complex).copy()
    if not np.any(x):
        raise ValueError("descent needs a nonzero start point")
    state = OrbitState(x=x, g=np.eye(action.dim, dtype=complex), h=kempf_ness_h(x), grad_norm=np.inf)
    state.h_history.append(state.h)
    alpha_max = 1.0 / curvature_bound(action)
    verdict = "budget"
    for _ in range(budget):
        grad = h_gradient(action, state.x)
        gn = float(np.linalg.norm(grad))
        state.grad_norm = gn
        if gn < grad_tol:
            verdict = "polystable"
            break
        if state.h < h_floor:
            verdict = "unstable"
            break
        # h differences come from expm1 on the spectrum of i rho(grad) so the
        # Armijo test stays meaningful when the decrease is below roundoff of h
        herm = 1j * action.rho(grad)
        lam, U = np.linalg.eigh(0.5 * (herm + herm.conj().T))
        c = U.conj().T @ state.x
        p = np.abs(c) ** 2 / np.sum(np.abs(c) ** 2)
        # Newton step for the one-dimensional convex profile, then backtrack
        var = float(np.sum(p * lam ** 2) - np.sum(p * lam) ** 2)
        if var > 1e-14 * float(np.max(np.abs(lam))) ** 2:
            alpha = gn ** 2 / (4.0 * var)
        else:
            alpha = max(alpha_max, (state.h - h_floor + 1.0) / gn ** 2)
        while True:
            with np.errstate(divide="ignore", over="ignore"):
                dh = float(np.log1p(np.sum(np.expm1(-2.0 * alpha * lam) * p)))
            if np.isfinite(dh) and dh <= -ARMIJO * alpha * gn ** 2:
                break
            alpha *= 0.5
            if alpha < 1e-300:
                raise RuntimeError("line search failed: no decrease along the negative gradient")
        step = (U * np.exp(-alpha * lam)) @ U.conj().T
        state.steps.append(-1j * alpha * grad)
        state.x = step @ state.x
        state.g = step @ state.g
        state.h += dh
        state.h_history.append(state.h)
        state.decrements.append(dh)
    else:
        grad = h_gradient(action, state.x)
        state.grad_norm = float(np.linalg.norm(grad))
        if state.grad_norm < grad_tol:
            verdict = "polystable"
        elif state.h < h_floor:
            verdict = "unstable"
    if verdict == "budget" and raise_on_budget:
        raise BudgetExhausted(f"no verdict after {budget} steps (h={state.h:.3e}, |grad|={state.grad_norm:.3e})")
    monotone = all(d < 0 for d in state.decrements)
    minimizer = state.x.copy() if verdict == "polystable" else None
    escape = None
    if verdict == "unstable":
        grad = h_gradient(action, state.x)
        escape = -grad / np.linalg.norm(grad)
    return DescentResult(verdict, state, minimizer, escape, moment_map(action, state.x), monotone)


def convexity_probe(action: LinearAction, x, xi, samples: int = 41, s_max: float = 1.0, tol: float = 1e-10) -> dict:
    """Second differences of ``s -> h(exp(i s rho(xi)) x)`` on a uniform grid."""
    xi = np.asarray(xi, float)
    if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise ValueError("convexity probe expects a unit Lie algebra direction")
    s = np.linspace(-s_max, s_max, samples)
    h = h_along(action, x, xi, s)
    d2 = h[2:] - 2 * h[1:-1] + h[:-2]
    return {"s": s, "h": h, "second_differences": d2, "min_second_difference": float(np.min(d2)),
            "pass": bool(np.min(d2) >= -tol)}


def align_by_compact(action: LinearAction, a, b, starts: int = 8, seed: int = 0):
    """Find ``k`` in ``K`` minimizing ``|k a - b|``; returns ``(k, residual)``."""
    a = np.asarray(a, complex)
    b = np.asarray(b, complex)

    def res(theta):
        r = action.exp(theta) @ a - b
        return np.concatenate([r.real, r.imag])

    rng = np.random.default_rng(seed)
    best = None
    for i in range(starts):
        th0 = np.zeros(action.rank) if i == 0 else rng.uniform(-np.pi, np.pi, action.rank)
        sol = least_squares(res, th0, xtol=1e-15, ftol=1e-15, gtol=1e-15)
        r = float(np.linalg.norm(res(sol.x)))
        if best is None or r < best[1]:
            best = (action.exp(sol.x), r)
    return best


def orbit_minimizer_agreement(action: LinearAction, x_star, n_starts: int = 5, seed: int = 0, workers: int = 1,
                              budget: int = 2000) -> dict:
    """Descend from several random points of the complex orbit of a polystable
    ``x_star`` and check that all minimizers share ``h`` and are related by ``K``."""
    rng = np.random.default_rng(seed)
    starts = [action.random_complex(rng) @ np.asarray(x_star, complex) for _ in range(n_starts)]
    with ThreadPoolExecutor(max_workers=max(1, workers)) as ex:
        results = list(ex.map(lambda x: kempf_ness_descend(action, x, budget), starts))
    verdicts = [r.verdict for r in results]
    if any(v != "polystable" for v in verdicts):
        return {"verdicts": verdicts, "h_spread": float("nan"), "alignment_residual": float("nan"), "pass": False}
    hs = [r.state.h for r in results]
    h_spread = max(abs(p - q) for p, q in itertools.combinations(hs, 2)) if len(hs) > 1 else 0.0
    align = max((align_by_compact(action, results[0].minimizer, r.minimizer, seed=seed)[1] for r in results[1:]),
                default=0.0)
    return {"verdicts": verdicts, "h_values": hs, "h_spread": float(h_spread),
            "alignment_residual": float(align), "pass": bool(h_spread <= 1e-9 and align <= 1e-7)}
