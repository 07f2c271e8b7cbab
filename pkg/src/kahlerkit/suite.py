"""The acceptance battery: ten numbered criteria with fixed tolerances.

Each ``criterion_k`` returns a :class:`CriterionResult`.  ``run_suite`` runs
them all and packages them as a ``suite`` report.  Randomness comes from
``stream(seed, 100 k + i)`` so every criterion draws the same data whatever
else runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from ._random import stream
from .curvature import chern_numbers, curvature, determinant_route, perturbed_scalar, scalar_from_top
from .exterior import mixed_cm
from .experiments import pmap
from .flows import continue_in_t, run_flow
from .invariants import (KahlerPath, bando_f1_via_potential, bando_total, gradient_field, mabuchi_between,
                         mabuchi_derivative_check, mabuchi_energy)
from .kempf_ness import (LinearAction, convexity_probe, extremal_decomposition, kempf_ness_descend,
                         stabilizer_character)
from .lichnerowicz import FLAT_TORUS_GAP, apply_L, kernel_basis, transport_check, transport_potential
from .manifold.calculus import flat_metric, metric_from_potential, reference_metric, volume_weights
from .manifold.fubini_study import fubini_study
from .manifold.grids import ChartGrid, TorusGrid
from .reports import Check, Report, check_le, check_true, jsonable

T_VALUES = (-0.1, 0.0, 0.05, 0.2)
TITLES = {
    1: "polarization of the determinant",
    2: "topological invariance of Chern numbers",
    3: "route equivalence for the perturbed scalar curvature",
    4: "constant-curvature references and the mean identity",
    5: "invariance of the total and first characters",
    6: "Mabuchi energy: path independence, cocycle, derivative",
    7: "flow convergence and continuation in t",
    8: "Lichnerowicz operator spectrum, kernel and transport",
    9: "Kempf-Ness sandbox",
    10: "reproducibility across worker counts",
}


@dataclass
class CriterionResult:
    number: int
    checks: list
    details: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def title(self) -> str:
        return TITLES[self.number]

    def worst(self) -> Check | None:
        failing = [c for c in self.checks if not c.passed]
        if failing:
            return failing[0]
        ratios = [(c.value / c.tolerance if c.tolerance else 0.0, c) for c in self.checks]
        return max(ratios, key=lambda r: r[0])[1] if ratios else None

    def line(self) -> str:
        w = self.worst()
        tail = f" [{w.name}: {w.value:.3e} vs {w.tolerance:.1e}]" if w is not None else ""
        return f"criterion {self.number:2d} {'PASS' if self.passed else 'FAIL'}  {self.title}{tail}"

    def as_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "pass": self.passed,
                "checks": [c.as_dict() for c in self.checks], "details": jsonable(self.details)}


# ---------------------------------------------------------------------------
# shared metrics


def torus_metrics(seed, m, N, count, amplitude, max_freq, offset):
    g0 = flat_metric(TorusGrid(m, N))
    out = []
    for i in range(count):
        phi = g0.grid.random_potential(stream(seed, offset + i), amplitude, max_freq=max_freq)
        out.append(metric_from_potential(g0, phi))
    return g0, out


def cp1_metrics(seed, count, amplitude, offset):
    g0 = reference_metric(ChartGrid())
    phis = [g0.grid.random_potential(stream(seed, offset + i), amplitude) for i in range(count)]
    return g0, phis, [metric_from_potential(g0, p) for p in phis]


def suite_metrics(seed):
    """Every metric the route and mean checks run on, labelled."""
    t1, r1 = torus_metrics(seed, 1, 32, 2, 0.005, 2, 300)
    t2, r2 = torus_metrics(seed, 2, 16, 2, 0.002, 1, 310)
    c0, _, rc = cp1_metrics(seed, 2, 0.005, 320)
    cp2, _ = fubini_study(2)
    out = [("torus1-flat", t1)] + [(f"torus1-random{i}", g) for i, g in enumerate(r1)]
    out += [("torus2-flat", t2)] + [(f"torus2-random{i}", g) for i, g in enumerate(r2)]
    out += [("cp1-fs", c0)] + [(f"cp1-random{i}", g) for i, g in enumerate(rc)]
    out += [("cp2-fs", cp2)]
    return out


# ---------------------------------------------------------------------------


def criterion_1(seed, workers=1) -> CriterionResult:
    rng = stream(seed, 100)
    worst = 0.0
    for m in (1, 2, 3):
        for _ in range(100):
            A = rng.standard_normal((m, m)) + 1j * rng.standard_normal((m, m))
            d = np.linalg.det(A)
            worst = max(worst, abs(mixed_cm(*([A] * m)) - d) / abs(d))
    c2 = mixed_cm(np.diag([1.0, 2.0]), np.diag([3.0, 4.0]))
    checks = [check_le("mixed_cm(A,...,A) vs det A, relative", worst, 1e-12),
              check_le("|c2(diag(1,2), diag(3,4)) - 5|", abs(c2 - 5.0), 1e-14)]
    return CriterionResult(1, checks, {"max_relative_error": worst, "c2_value": complex(c2)})


def criterion_2(seed, workers=1) -> CriterionResult:
    _, r1 = torus_metrics(seed, 1, 32, 20, 0.005, 2, 200)
    _, r2 = torus_metrics(seed, 2, 16, 20, 0.002, 1, 220)
    _, _, rc = cp1_metrics(seed, 3, 0.005, 240)
    n1 = pmap(chern_numbers, r1, workers)
    n2 = pmap(chern_numbers, r2, workers)
    nc = pmap(chern_numbers, rc, workers)
    w1 = max(abs(n[1]) for n in n1)
    w2c1 = max(abs(n[1]) for n in n2)
    w2c2 = max(abs(n[2]) for n in n2)
    wc = max(abs(n[1] - 2.0) for n in nc)
    checks = [check_le("torus m=1: max |int c1|", w1, 1e-9),
              check_le("torus m=2: max |int c1^omega|", w2c1, 1e-9),
              check_le("torus m=2: max |int c2|", w2c2, 1e-9),
              check_le("cp1 perturbed: max |int c1 - 2|", wc, 1e-5)]
    return CriterionResult(2, checks, {"cp1_c1": [n[1] for n in nc]})


def criterion_3_4(seed, workers=1):
    metrics = suite_metrics(seed)

    def work(item):
        label, g = item
        curv = curvature(g)
        rows = []
        for t in T_VALUES:
            ps = perturbed_scalar(curv, t, check_admissible=False)
            S = ps.S.values
            S_det = np.real(scalar_from_top(determinant_route(curv, t), g))
            route = float(np.max(np.abs(S - S_det)) / max(float(np.max(np.abs(S))), 1.0))
            target = 2 * g.m * np.pi * ps.sigma
            mean_gap = abs(ps.mean_S - target) / max(abs(target), 1.0)
            rows.append({"t": t, "route": route, "mean": mean_gap, "S_min": float(np.min(S)),
                         "S_max": float(np.max(S))})
        return label, rows

    results = pmap(work, metrics, workers)
    route = max(r["route"] for _, rows in results for r in rows)
    mean = max(r["mean"] for _, rows in results for r in rows)
    by = dict(results)
    cp1 = max(max(abs(r["S_min"] - 4 * np.pi), abs(r["S_max"] - 4 * np.pi)) for r in by["cp1-fs"])
    cp2 = max(max(abs(r["S_min"] - 12 * np.pi * (1 + r["t"])), abs(r["S_max"] - 12 * np.pi * (1 + r["t"])))
              for r in by["cp2-fs"])
    c3 = CriterionResult(3, [check_le("max relative route gap over suite metrics and t", route, 1e-10)],
                         {"labels": [lab for lab, _ in results]})
    c4 = CriterionResult(4, [check_le("cp1 fs: sup |S - 4 pi|", cp1, 1e-5),
                             check_le("cp2 fs: sup |S(t) - 12 pi (1 + t)|", cp2, 1e-10),
                             check_le("max relative mean-identity gap", mean, 1e-7)])
    return c3, c4


def criterion_5(seed, workers=1) -> CriterionResult:
    g0, phis, gs = cp1_metrics(seed, 1, 0.005, 500)
    X, Y, Z = g0.grid.cartesian()
    pots = {"x": X, "y": Y, "z": Z}
    cases = [(None, g0)] + list(zip(phis, gs))
    tasks = [(i, name) for i in range(len(cases)) for name in pots]

    def work(task):
        i, name = task
        phi, g = cases[i]
        u = pots[name] if phi is None else transport_potential(pots[name], phi, g0)
        curv = curvature(g)
        return ([bando_total(u, curv, t) for t in (0.0, 0.2)],
                bando_f1_via_potential(gradient_field(u, curv), curv))

    res = dict(zip(tasks, pmap(work, tasks, workers)))
    gap_F = max(abs(res[(0, n)][0][k] - res[(1, n)][0][k]) for n in pots for k in range(2))
    size = max(abs(v) for r in res.values() for v in r[0])
    route = max(abs(r[1] - r[0][0]) for r in res.values())
    checks = [check_le("F_t gap between fs and perturbed metric", gap_F, 1e-5),
              check_le("max |F_t| on cp1", size, 1e-5),
              check_le("f1 pairing vs potential route", route, 1e-5)]
    return CriterionResult(5, checks, {"F_t": {f"{i}-{n}": r[0] for (i, n), r in res.items()}})


def criterion_6(seed, workers=1) -> CriterionResult:
    g0 = flat_metric(TorusGrid(1, 32))
    grid = g0.grid
    a, b, bump, direction = (grid.random_potential(stream(seed, 600 + i), 0.005) for i in range(4))
    t, qt = 0.1, 1e-10
    lin = mabuchi_energy(KahlerPath.linear(g0, a), t, tol=qt, workers=workers)
    cub = mabuchi_energy(KahlerPath.cubic(g0, a), t, tol=qt, workers=workers)
    det = mabuchi_energy(KahlerPath.detour(g0, a, bump), t, tol=qt, workers=workers)
    cocycle = lin.value + mabuchi_between(g0, a, b, t, tol=qt) + mabuchi_between(g0, b, np.zeros(grid.shape), t,
                                                                                   tol=qt)
    d_torus = mabuchi_derivative_check(g0, direction, t, require_holomorphic=False, tol=qt)
    # cp1: an axisymmetric perturbation keeps the transported height potential real
    c0 = reference_metric(ChartGrid())
    Zc = c0.grid.cartesian()[2]
    phi = 0.01 * (Zc ** 2 - 1 / 3) + 0.005 * Zc ** 3
    gp = metric_from_potential(c0, phi)
    uz = np.real(transport_potential(Zc, phi, c0))
    d_cp1 = mabuchi_derivative_check(gp, uz, t, tol=qt)
    path_gap = max(abs(lin.value - cub.value), abs(lin.value - det.value))
    checks = [check_le("path independence (linear, cubic, detour)", path_gap, 1e-7),
              check_le("cocycle sum", abs(cocycle), 3e-7),
              check_le("torus derivative identity gap", d_torus["gap"], d_torus["tolerance"]),
              check_le("cp1 derivative identity gap", d_cp1["gap"], d_cp1["tolerance"])]
    return CriterionResult(6, checks, {"nu": lin.value, "derivative_torus": d_torus, "derivative_cp1": d_cp1})


def criterion_7(seed, workers=1) -> CriterionResult:
    g0 = flat_metric(TorusGrid(1, 32))
    phis = [g0.grid.random_potential(stream(seed, 700 + i), 0.005) for i in range(10)]
    reps = pmap(lambda p: run_flow(g0, p, 0.1, budget=200), phis, workers)
    ok = sum(r.converged and r.sup_S_minus_sigma < 1e-6 and r.nu_monotone for r in reps)
    cont = continue_in_t(g0, np.zeros(g0.grid.shape), np.round(np.arange(0, 0.3001, 0.05), 12), cold_start=phis[0])
    checks = [check_true(f"{ok}/10 flows converge with monotone nu", ok == 10),
              check_le("worst final sup|S - sigma|", max(r.sup_S_minus_sigma for r in reps), 1e-6),
              check_true("continuation over t in [0, 0.3] succeeds at every rung", cont.success)]
    return CriterionResult(7, checks, {"steps": [r.steps for r in reps], "continuation": cont.summary()})


def _self_adjoint(g, rng):
    grid = g.grid
    a = grid.random_potential(rng, 1.0) + 1j * grid.random_potential(rng, 1.0)
    b = grid.random_potential(rng, 1.0)
    w = volume_weights(g)
    La, Lb = apply_L(a, g), apply_L(b, g)
    scale = np.sqrt(np.sum(np.abs(La) ** 2 * w) * np.sum(np.abs(b) ** 2 * w))
    return float(abs(np.sum(La * np.conj(b) * w) - np.sum(a * np.conj(Lb) * w)) / scale)


def criterion_8(seed, workers=1) -> CriterionResult:
    t0 = flat_metric(TorusGrid(1, 32))
    flat = kernel_basis(t0, seed=seed % 2 ** 32)
    c0, phis, gs = cp1_metrics(seed, 2, 0.005, 800)
    fs = kernel_basis(c0)
    X, Y, Z = c0.grid.cartesian()
    grad_gap = mean_gap = 0.0
    for phi in phis:
        for u in (X, Y, Z):
            tc = transport_check(u, phi, c0)
            grad_gap = max(grad_gap, tc["gradient_gap"])
            mean_gap = max(mean_gap, tc["mean_gap"])
    _, tr = torus_metrics(seed, 1, 32, 1, 0.005, 2, 810)
    sa = max(_self_adjoint(g, stream(seed, 820 + i)) for i, g in enumerate(tr + gs))
    rel = abs(flat.smallest_nonconstant - FLAT_TORUS_GAP) / FLAT_TORUS_GAP
    checks = [check_le("flat torus smallest nonconstant eigenvalue vs pi^4, relative", rel, 1e-6),
              check_true(f"cp1 fs kernel complex dimension {fs.dim_complex} == 3", fs.dim_complex == 3),
              check_le("transported potentials: gradient identity", grad_gap, 1e-8),
              check_le("transported potentials: mean-zero preservation", mean_gap, 1e-8),
              check_le("self-adjointness", sa, 1e-8)]
    return CriterionResult(8, checks, {"flat_gap": flat.smallest_nonconstant, "fs": fs.report("cp1")})


def criterion_9(seed, workers=1) -> CriterionResult:
    torus = LinearAction.torus([[1, -1]])
    su2 = LinearAction.su2(["1/2"])
    pair = [kempf_ness_descend(torus, (1, 1)), kempf_ness_descend(torus, (1, 0))]
    classified = pair[0].verdict == "polystable" and pair[1].verdict == "unstable"
    rng = stream(seed, 900)
    worst_conv = np.inf
    for action in (torus, su2, LinearAction.su2(["1/2", "1"])):
        for _ in range(20):
            x = rng.standard_normal(action.dim) + 1j * rng.standard_normal(action.dim)
            xi = rng.standard_normal(action.rank)
            xi /= np.linalg.norm(xi)
            worst_conv = min(worst_conv, convexity_probe(action, x, xi)["min_second_difference"])
    eq = 0.0
    for k, action in enumerate((su2, LinearAction.su2(["1"]), LinearAction.su2(["1/2", "1"]))):
        x = rng.standard_normal(action.dim) + 1j * rng.standard_normal(action.dim)
        eq = max(eq, stabilizer_character(action, x, seed=k).equivariance_gap)
    eq = max(eq, stabilizer_character(su2, (1, 0), seed=11).equivariance_gap)
    ex = extremal_decomposition(su2, (1, 0))
    ex0 = extremal_decomposition(torus, pair[0].minimizer)
    checks = [check_true("weight (1,-1): (1,1) polystable and (1,0) unstable", classified),
              check_true(f"convexity second differences >= -1e-10 (min {worst_conv:.2e})", worst_conv >= -1e-10),
              check_le("character equivariance gap", eq, 1e-8),
              check_true("SU(2) at (1,0): ad(i mu) eigenvalues >= 0", ex.nonnegative),
              check_true("SU(2) at (1,0): zero eigenspace is the complexified compact stabilizer",
                         ex.zero_space_is_compact_complexified),
              check_true("SU(2) at (1,0): reductive stabilizer iff mu = 0", ex.iff_holds),
              check_true("polystable minimizer: reductive stabilizer iff mu = 0", ex0.iff_holds and ex0.moment_zero)]
    return CriterionResult(9, checks, {"su2_eigenvalues": ex.eigenvalues, "min_second_difference": worst_conv})


def run_criteria(seed: int = 0, workers: int = 1, timings=None) -> list:
    out = []
    for fn in (criterion_1, criterion_2, criterion_3_4, criterion_5, criterion_6, criterion_7, criterion_8,
               criterion_9):
        t0 = time.perf_counter()
        res = fn(seed, workers)
        res = list(res) if isinstance(res, tuple) else [res]
        if timings is not None:
            for r in res:
                timings[r.number] = time.perf_counter() - t0
        out.extend(res)
    return out


def suite_report(criteria, seed) -> Report:
    rep = Report("suite", {"seed": seed})
    rep.results["criteria"] = [c.as_dict() for c in criteria]
    for c in criteria:
        for chk in c.checks:
            rep.checks.append(Check(f"criterion {c.number}: {chk.name}", chk.value, chk.tolerance, chk.passed,
                                    chk.detail))
    return rep


def run_suite(workers: int = 1, seed: int = 0, out=None, rerun: bool = True, echo=print) -> Report:
    """Run criteria 1-9; with ``rerun`` repeat them with the other worker count
    (1 or 8) and add criterion 10 comparing the two JSON documents byte for byte."""
    timings = {}
    criteria = run_criteria(seed, workers, timings)
    for c in criteria:
        echo(c.line() + f"  ({timings[c.number]:.1f} s)")
    if rerun:
        other = 8 if workers == 1 else 1
        again = run_criteria(seed, other)
        a = json.dumps(suite_report(criteria, seed).as_dict(), sort_keys=True)
        b = json.dumps(suite_report(again, seed).as_dict(), sort_keys=True)
        c10 = CriterionResult(10, [check_true("criteria 1-9 JSON identical across worker counts", a == b)],
                              {"worker_counts": sorted({workers, other}), "bytes": len(a)})
        echo(c10.line())
        criteria.append(c10)
    return suite_report(criteria, seed)
