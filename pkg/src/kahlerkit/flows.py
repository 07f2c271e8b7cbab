"""A Calabi-type descent flow for the perturbed scalar curvature.

Each step moves the potential by ``h P (S(omega_phi, t) - 2 m pi sigma(t))``
where ``P`` is a damping preconditioner: ``(1 + h Lap_flat^2)^{-1}`` on tori and
``(1 + h Lap_FS^2)^{-1}``, diagonal on spherical harmonics, on the CP^1 chart.  ``P``
is invertible, so fixed points are exactly the metrics with constant
perturbed scalar curvature.  The damping uses ``h / lambda_min^2`` where
``lambda_min`` is the smallest eigenvalue of the current metric relative to the
reference one: the fourth-order part of the linearized operator scales like
``Lap_g^2``, and freezing its coefficient at the worst node keeps
near-degenerate starts stable.  Steps that break positivity or increase the
Mabuchi energy or the Calabi energy (beyond a small slack) are rejected and
``h`` is halved.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .curvature import CurvatureError, admissible_t, curvature, perturbed_scalar, sigma
from .invariants import KahlerPath, mabuchi_energy
from .lichnerowicz import dbar_hessian, tensor_norm2
from .manifold.calculus import integrate_volume, metric_from_potential
from .manifold.fields import MetricField, PositivityError, values_of
from .manifold.grids import ChartGrid, TorusGrid

log = logging.getLogger(__name__)

LOG_COLUMNS = ["step", "h", "calabi_energy", "nu_t", "sup_S_minus_sigma", "extremal_residual"]
MAX_REJECTIONS = 30
DESCENT_SLACK = 1e-9


class FlowError(RuntimeError):
    def __init__(self, msg, state=None):
        super().__init__(msg)
        self.state = state


@dataclass
class _Eval:
    metric: MetricField
    S: np.ndarray
    dev: np.ndarray  # S - 2 m pi sigma
    calabi: float


@dataclass
class FlowState:
    """Potential relative to the base metric, kept mean-zero in the base volume."""

    phi: np.ndarray
    t: float
    step: int = 0
    h: float = 0.1
    nu: float = 0.0
    history: list = field(default_factory=list)
    rejections: int = 0
    total_rejections: int = 0
    last_update: float = float("inf")
    _eval: _Eval | None = None


@dataclass
class FlowReport:
    converged: bool
    steps: int
    sup_S_minus_sigma: float
    calabi_energy: float
    nu_t: float
    extremal_residual: float
    calabi_monotone: bool
    nu_monotone: bool
    rejections: int
    state: FlowState
    history: list

    def summary(self) -> dict:
        return {
            "converged": self.converged,
            "steps": self.steps,
            "sup_S_minus_sigma": self.sup_S_minus_sigma,
            "calabi_energy": self.calabi_energy,
            "nu_t": self.nu_t,
            "extremal_residual": self.extremal_residual,
            "calabi_monotone": self.calabi_monotone,
            "nu_monotone": self.nu_monotone,
            "rejections": self.rejections,
        }


def _base_meanzero(phi, g0: MetricField):
    w = values_of(phi)
    return np.real(w - integrate_volume(w, g0) / integrate_volume(np.ones(g0.grid.shape), g0))


def _evaluate(g0, phi, t, target) -> _Eval:
    g = metric_from_potential(g0, phi)
    ps = perturbed_scalar(g, t, check_admissible=False)
    dev = ps.S.values - target
    cal = float(np.real(integrate_volume(dev ** 2, g)))
    return _Eval(g, ps.S.values, dev, cal)


def preconditioner(grid, h: float):
    """Return ``f -> P f`` for step size ``h``."""
    if isinstance(grid, TorusGrid):
        lap = np.array(grid.flat_laplacian_symbol())
        # constants and pure-Nyquist modes are invisible to spectral derivatives; never move them
        sym = np.where(lap == 0, 0.0, 1.0 / (1.0 + h * lap ** 2))
        return lambda f: np.real(grid.apply_symbol(f, sym))
    if isinstance(grid, ChartGrid):
        def mult(ell):
            lam = 2 * np.pi * ell * (ell + 1.0)  # -Lap_FS eigenvalue
            return 1.0 / (1.0 + h * lam ** 2)
        return lambda f: grid.sphere_multiplier(f, mult, ("flow", h))
    raise NotImplementedError("flows need a grid with differentiation")


def stiffness_scale(g: MetricField) -> float:
    """``1 / lambda_min^2`` for the metric relative to the reference metric."""
    rel = np.moveaxis(g.rel, (0, 1), (-2, -1))
    lam = float(np.min(np.real(np.linalg.eigvals(rel))))
    return 1.0 / lam ** 2


def extremal_residual(g, t: float) -> float:
    """L2 norm of ``dbar grad' S(omega, t)``."""
    curv = curvature(g) if isinstance(g, MetricField) else g
    S = perturbed_scalar(curv, t, check_admissible=False).S.values
    n2 = tensor_norm2(dbar_hessian(S, curv), curv.metric)
    return float(np.sqrt(max(float(np.real(integrate_volume(n2, curv.metric))), 0.0)))


def _target(g0, t):
    return 2 * g0.m * np.pi * sigma(curvature(g0), t)


def flow_step(state: FlowState, g0: MetricField, target: float | None = None, preconditioned: bool = True,
              h_max: float = 1e4) -> FlowState:
    """One accepted step, with backtracking.

    Raises
    ------
    FlowError
        After ``MAX_REJECTIONS`` consecutive rejected trial steps.
    """
    t = state.t
    target = _target(g0, t) if target is None else target
    if state._eval is None:
        state._eval = _evaluate(g0, state.phi, t, target)
    cur = state._eval
    grid = g0.grid
    h = state.h
    stiff = stiffness_scale(cur.metric)
    state.rejections = 0
    while True:
        direction = preconditioner(grid, h * stiff)(cur.dev) if preconditioned else cur.dev
        trial = _base_meanzero(state.phi + h * direction, g0)
        reason = None
        try:
            new = _evaluate(g0, trial, t, target)
        except PositivityError as exc:
            reason = f"positivity ({exc.min_eig:.2e})"
            new = None
        if new is not None:
            # nu increment along the segment by Simpson on {0, 1/2, 1}
            delta = trial - state.phi
            mid = _evaluate(g0, 0.5 * (state.phi + trial), t, target)
            f0 = -float(np.real(integrate_volume(delta * cur.dev, cur.metric)))
            fm = -float(np.real(integrate_volume(delta * mid.dev, mid.metric)))
            f1 = -float(np.real(integrate_volume(delta * new.dev, new.metric)))
            dnu = (f0 + 4 * fm + f1) / 6
            if dnu > DESCENT_SLACK:
                reason = f"nu increased by {dnu:.2e}"
            elif new.calabi > cur.calabi + DESCENT_SLACK:
                reason = f"Calabi energy increased by {new.calabi - cur.calabi:.2e}"
        if reason is None:
            break
        state.rejections += 1
        state.total_rejections += 1
        log.debug("step %d rejected at h=%.3e: %s", state.step, h, reason)
        if state.rejections >= MAX_REJECTIONS:
            raise FlowError(f"{MAX_REJECTIONS} consecutive rejected steps (last: {reason})", state)
        h *= 0.5
    state.step += 1
    state.nu += dnu
    state.phi = trial
    state._eval = new
    state.h = min(2.0 * h, h_max)
    state.last_update = float(np.max(np.abs(delta)))
    return state


def _record(state, ext):
    ev = state._eval
    row = {
        "step": state.step,
        "h": state.h,
        "calabi_energy": ev.calabi,
        "nu_t": state.nu,
        "sup_S_minus_sigma": float(np.max(np.abs(ev.dev))),
        "extremal_residual": ext,
    }
    state.history.append(row)
    return row


def run_flow(g0: MetricField, phi0, t: float, budget: int = 200, h0: float = 0.1, tol: float = 1e-6,
             step_tol: float = 1e-10, preconditioned: bool = True, log_path=None, track_extremal: bool = True,
             compute_initial_nu: bool = True) -> FlowReport:
    """Run the flow from ``omega_0 + i d dbar phi0`` until ``|S - 2 m pi sigma|_inf < tol``
    and the last update is below ``step_tol``, or the step budget runs out.

    ``nu_t`` in the log is measured from the base metric: its initial value is
    a path quadrature from 0 to ``phi0`` and every step adds the Simpson
    increment along the step.
    """
    rep = admissible_t(curvature(g0), t)
    if not rep["ok"]:
        raise CurvatureError(f"t={t} is not admissible at the start metric (margin {rep['margin']:.3e})")
    target = _target(g0, t)
    phi = _base_meanzero(np.real(values_of(phi0)), g0)
    state = FlowState(phi=phi, t=t, h=h0)
    if compute_initial_nu and np.any(phi):
        state.nu = mabuchi_energy(KahlerPath.linear(g0, phi), t).value
    state._eval = _evaluate(g0, phi, t, target)
    ext = extremal_residual(state._eval.metric, t) if track_extremal else float("nan")
    _record(state, ext)
    converged = False
    while state.step < budget:
        if float(np.max(np.abs(state._eval.dev))) < tol and state.last_update < step_tol:
            converged = True
            break
        flow_step(state, g0, target, preconditioned)
        ext = extremal_residual(state._eval.metric, t) if track_extremal else float("nan")
        _record(state, ext)
    else:
        converged = float(np.max(np.abs(state._eval.dev))) < tol and state.last_update < step_tol
    hist = state.history
    cal = [r["calabi_energy"] for r in hist]
    nus = [r["nu_t"] for r in hist]
    cal_mono = all(b <= a + DESCENT_SLACK for a, b in zip(cal, cal[1:]))
    nu_mono = all(b <= a + DESCENT_SLACK for a, b in zip(nus, nus[1:]))
    if log_path is not None:
        write_log(log_path, hist)
    last = hist[-1]
    return FlowReport(converged, state.step, last["sup_S_minus_sigma"], last["calabi_energy"], last["nu_t"],
                      last["extremal_residual"], cal_mono, nu_mono, state.total_rejections, state, hist)


def write_log(path, history):
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        w.writeheader()
        for row in history:
            w.writerow({k: (repr(float(row[k])) if k != "step" else int(row[k])) for k in LOG_COLUMNS})
    return path


@dataclass
class Rung:
    t: float
    converged: bool
    steps: int
    cold_steps: int | None
    sup_S_minus_sigma: float
    drift: float


@dataclass
class ContinuationReport:
    rungs: list
    frontier: float | None
    success: bool
    phis: list = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "success": self.success,
            "frontier": self.frontier,
            "rungs": [r.__dict__ for r in self.rungs],
        }


def continue_in_t(g0: MetricField, phi_start, t_grid, budget: int = 200, cold_start=None,
                  compare_cold: bool = True, **kw) -> ContinuationReport:
    """Follow constant-S(omega, t) metrics along an increasing ``t`` grid.

    Every rung is warm-started from the previous solution.  With
    ``compare_cold`` each rung is also solved from ``cold_start`` (the original
    start potential by default) so iteration counts can be compared.
    The start metric must be extremal at the first ``t``.
    """
    t_grid = list(t_grid)
    if any(b <= a for a, b in zip(t_grid, t_grid[1:])):
        raise ValueError("t_grid must be increasing")
    phi = _base_meanzero(np.real(values_of(phi_start)), g0)
    start_ext = extremal_residual(metric_from_potential(g0, phi), t_grid[0])
    if start_ext > 1e-6:
        raise FlowError(f"start metric is not extremal at t={t_grid[0]} (residual {start_ext:.2e})")
    cold = phi if cold_start is None else _base_meanzero(np.real(values_of(cold_start)), g0)
    rungs, phis = [], []
    frontier = None
    prev = phi
    for t in t_grid:
        try:
            rep = run_flow(g0, prev, t, budget, track_extremal=False, compute_initial_nu=False, **kw)
        except (FlowError, CurvatureError) as exc:
            log.info("continuation stopped at t=%s: %s", t, exc)
            frontier = t
            break
        cold_steps = None
        if compare_cold:
            cold_steps = run_flow(g0, cold, t, budget, track_extremal=False, compute_initial_nu=False, **kw).steps
        drift = float(np.max(np.abs(rep.state.phi - prev)))
        rungs.append(Rung(float(t), rep.converged, rep.steps, cold_steps, rep.sup_S_minus_sigma, drift))
        phis.append(rep.state.phi)
        if not rep.converged:
            frontier = t
            break
        prev = rep.state.phi
    success = frontier is None and all(r.converged for r in rungs)
    return ContinuationReport(rungs, frontier, success, phis)
