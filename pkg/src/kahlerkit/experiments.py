"""Command implementations shared by the CLI, the suite and the demos.

Every command takes an :class:`ExperimentConfig`, returns a :class:`Report`
and, when ``out`` is given, writes field containers and logs there.  Tasks
over metrics or runs go through a thread pool whose results are collected in
submission order, so reports do not depend on the worker count.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._random import stream
from .config import ConfigError, ExperimentConfig, parse_t_list
from .curvature import (chern_numbers, curvature, determinant_route, perturbed_scalar, scalar_from_top, sigma)
from .exterior import power, wedge
from .flows import continue_in_t, run_flow, write_log
from .invariants import (KahlerPath, bando_f1_via_potential, bando_total, gradient_field, mabuchi_between,
                         mabuchi_derivative_check, mabuchi_energy)
from .kempf_ness import (convexity_probe, extremal_decomposition, gradient_identity_gap, load_scenario,
                         stabilizer_character)
from .kempf_ness.scenario import ScenarioError, run_scenario
from .kempf_ness.stabilizer import criticality_gradient
from .lichnerowicz import (FLAT_TORUS_GAP, FS_CP1_GAP, apply_L, kernel_basis, transport_check,
                           transport_potential)
from .manifold.calculus import flat_metric, metric_from_potential, reference_metric, volume_weights
from .manifold.container import read_field, write_field
from .manifold.fubini_study import fubini_study
from .manifold.grids import ChartGrid, TorusGrid, make_grid
from .reports import Report, check_le, check_true

log = logging.getLogger(__name__)


@dataclass
class MetricCase:
    label: str
    metric: object
    phi: np.ndarray | None  # potential relative to the base metric, None for the base itself


def pmap(fn, items, workers: int):
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def build_grid(cfg: ExperimentConfig):
    if cfg.manifold == "torus":
        return make_grid("torus", m=cfg.m, N=cfg.N)
    if cfg.manifold == "cp1":
        return make_grid("cp1", n_theta=cfg.n_theta, n_lam=cfg.n_lam)
    return None


def base_metric(cfg: ExperimentConfig):
    if cfg.manifold == "cp2-analytic":
        return fubini_study(2, n_alpha=cfg.n_alpha)[0]
    grid = build_grid(cfg)
    return flat_metric(grid) if cfg.manifold == "torus" else reference_metric(grid)


def random_potential(grid, rng, cfg: ExperimentConfig):
    if isinstance(grid, TorusGrid):
        return grid.random_potential(rng, cfg.amplitude, max_freq=cfg.max_freq)
    return grid.random_potential(rng, cfg.amplitude, max_degree=cfg.max_freq)


def load_potential(path, grid):
    try:
        values, header = read_field(path)
    except FileNotFoundError:
        raise ConfigError(f"potential file {path} does not exist") from None
    if tuple(values.shape) != tuple(grid.shape):
        raise ConfigError(f"potential file {path} has grid {values.shape}, expected {grid.shape}")
    spec = grid.spec()
    if header.get("manifold") != spec["manifold"]:
        raise ConfigError(f"potential file {path} is for manifold {header.get('manifold')!r}")
    if np.max(np.abs(values.imag)) > 1e-6 * max(np.max(np.abs(values.real)), 1.0):
        raise ConfigError(f"potential file {path} is not real")
    return np.real(values)


def metric_cases(cfg: ExperimentConfig, include_base: bool = False, stream_offset: int = 0) -> list:
    """Metrics named by the config.  Random potentials use stream ``offset + i``."""
    g0 = base_metric(cfg)
    base = MetricCase("flat" if cfg.manifold == "torus" else "fs", g0, None)
    if cfg.metric in ("flat", "fs"):
        return [base]
    grid = g0.grid
    cases = [base] if include_base else []
    if cfg.metric == "potential":
        phi = load_potential(cfg.potential_file, grid)
        cases.append(MetricCase("potential", metric_from_potential(g0, phi), phi))
        return cases
    for i in range(cfg.count):
        phi = random_potential(grid, stream(cfg.seed, stream_offset + i), cfg)
        cases.append(MetricCase(f"random{i}", metric_from_potential(g0, phi), phi))
    return cases


def _out(out):
    if out is None:
        return None
    p = Path(out)
    p.mkdir(parents=True, exist_ok=True)
    return p


def _save_field(out, fname, values, grid, name, files, extra=None):
    if out is None or not hasattr(grid, "spec"):
        return
    path = out / fname
    write_field(path, values, grid.spec(), name, dtype="complex128", extra=extra)
    files.append(path.name)


# ---------------------------------------------------------------------------


def cmd_chern(cfg: ExperimentConfig, out=None) -> Report:
    out = _out(out)
    tol = cfg.tolerances
    rep = Report("chern", cfg.as_dict())
    cases = metric_cases(cfg)

    def work(case):
        curv = curvature(case.metric)
        nums = chern_numbers(curv)
        dens = []
        omega = case.metric.kahler_form()
        top = power(omega, case.metric.m).top()
        for k in range(1, case.metric.m + 1):
            dens.append(wedge(curv.chern[k], power(omega, case.metric.m - k)).top() / top)
        return nums, dens

    results = pmap(work, cases, cfg.workers)
    rows = []
    for case, (nums, dens) in zip(cases, results):
        rows.append({"label": case.label, "volume": nums[0], "integrals": nums[1:]})
        for k, d in enumerate(dens, 1):
            _save_field(out, f"{case.label}_c{k}.kkf", d, case.metric.grid, f"c{k}_density", rep.files)
        m = case.metric.m
        if cfg.manifold == "torus":
            for k in range(1, m + 1):
                rep.checks.append(check_le(f"{case.label}: |int c{k}| on a torus", abs(nums[k]), tol["chern"]))
        elif cfg.manifold == "cp1":
            rep.checks.append(check_le(f"{case.label}: |int c1 - 2|", abs(nums[1] - 2.0), tol["chern_cp1"]))
        else:
            rep.checks.append(check_le(f"{case.label}: |int c1^omega - 3|", abs(nums[1] - 3.0), tol["chern"]))
            rep.checks.append(check_le(f"{case.label}: |int c2 - 3|", abs(nums[2] - 3.0), tol["chern"]))
    rep.results["metrics"] = rows
    return rep


def _reference_value(cfg, t):
    if cfg.metric != "fs":
        return None
    if cfg.manifold == "cp1":
        return 4 * np.pi, cfg.tolerances["reference_cp1"]
    if cfg.manifold == "cp2-analytic":
        return 12 * np.pi * (1 + t), cfg.tolerances["reference_cp2"]
    return None


def cmd_scalar(cfg: ExperimentConfig, out=None) -> Report:
    out = _out(out)
    tol = cfg.tolerances
    rep = Report("scalar", cfg.as_dict())
    cases = metric_cases(cfg)
    tasks = [(c, t) for c in cases for t in cfg.t]

    def work(task):
        case, t = task
        curv = curvature(case.metric)
        ps = perturbed_scalar(curv, t, check_admissible=False)
        S = ps.S.values
        S_det = np.real(scalar_from_top(determinant_route(curv, t), case.metric))
        route_gap = float(np.max(np.abs(S - S_det)) / max(float(np.max(np.abs(S))), 1.0))
        return ps, route_gap

    results = pmap(work, tasks, cfg.workers)
    rows = []
    for (case, t), (ps, route_gap) in zip(tasks, results):
        m = case.metric.m
        target = 2 * m * np.pi * ps.sigma
        mean_gap = abs(ps.mean_S - target) / max(abs(target), 1.0)
        S = ps.S.values
        row = {"label": case.label, "t": t, "sigma": ps.sigma, "mean_S": ps.mean_S, "min_S": float(np.min(S)),
               "max_S": float(np.max(S)), "calabi_energy": ps.calabi_energy, "route_gap": route_gap}
        rep.checks.append(check_le(f"{case.label} t={t}: route gap", route_gap, tol["route"]))
        rep.checks.append(check_le(f"{case.label} t={t}: mean identity", mean_gap, tol["mean"]))
        ref = _reference_value(cfg, t)
        if ref is not None:
            val, rtol = ref
            dev = float(np.max(np.abs(S - val)))
            row["reference_deviation"] = dev
            rep.checks.append(check_le(f"{case.label} t={t}: |S - {val:.6f}|", dev, rtol))
        rows.append(row)
        _save_field(out, f"{case.label}_S_t{t:g}.kkf", S, case.metric.grid, "S", rep.files, {"t": repr(t)})
    rep.results["metrics"] = rows
    return rep


def cmd_sigma(cfg: ExperimentConfig, out=None) -> Report:
    tol = cfg.tolerances
    rep = Report("sigma", cfg.as_dict())
    cases = metric_cases(cfg)
    curvs = pmap(lambda c: curvature(c.metric), cases, cfg.workers)
    table = {}
    for t in cfg.t:
        vals = [sigma(cv, t) for cv in curvs]
        table[repr(float(t))] = vals[0]
        spread = max(vals) - min(vals)
        rep.checks.append(check_le(f"t={t}: sigma spread across metrics", spread, tol["sigma"]))
        if cfg.manifold == "torus":
            rep.checks.append(check_le(f"t={t}: |sigma| on a torus", abs(vals[0]), tol["sigma"]))
    rep.results["sigma"] = table
    rep.results["labels"] = [c.label for c in cases]
    return rep


def holomorphy_potentials(g0):
    """Known holomorphy potentials of the base metric."""
    grid = g0.grid
    if isinstance(grid, ChartGrid):
        X, Y, Z = grid.cartesian()
        return {"x": X, "y": Y, "z": Z}
    return {}


def cmd_futaki(cfg: ExperimentConfig, out=None) -> Report:
    if cfg.manifold == "cp2-analytic":
        raise ConfigError("futaki needs a grid with differentiation (torus or cp1)")
    tol = cfg.tolerances
    rep = Report("futaki", cfg.as_dict())
    cases = metric_cases(cfg, include_base=True)
    g0 = cases[0].metric
    pots = holomorphy_potentials(g0)
    tasks = [(c, name, t) for c in cases for name in pots for t in cfg.t]

    def work(task):
        case, name, t = task
        u = pots[name]
        if case.phi is not None:
            u = transport_potential(u, case.phi, g0)
        curv = curvature(case.metric)
        Ft = bando_total(u, curv, t)
        f1 = bando_f1_via_potential(gradient_field(u, curv), curv)
        f1_pair = bando_total(u, curv, 0.0)
        return Ft, f1, f1_pair

    results = pmap(work, tasks, cfg.workers)
    chars = []
    by_key = {}
    for (case, name, t), (Ft, f1, f1p) in zip(tasks, results):
        chars.append({"label": case.label, "potential": name, "t": t, "F_t": Ft, "f1_potential": f1,
                      "f1_pairing": f1p})
        by_key.setdefault((name, t), []).append(Ft)
        rep.checks.append(check_le(f"{case.label} {name} t={t}: f1 routes", abs(f1 - f1p), tol["futaki"]))
        if cfg.manifold == "cp1":
            rep.checks.append(check_le(f"{case.label} {name} t={t}: |F_t|", abs(Ft), tol["futaki"]))
    for (name, t), vals in by_key.items():
        gap = max(abs(a - b) for a in vals for b in vals)
        rep.checks.append(check_le(f"{name} t={t}: F_t gap across the class", gap, tol["futaki"]))
    rep.results["characters"] = chars
    rep.results["potentials"] = sorted(pots)
    if not pots:
        rep.results["note"] = "the base metric has no nonconstant holomorphy potentials; all characters vanish"
    return rep


def cmd_mabuchi(cfg: ExperimentConfig, out=None) -> Report:
    if cfg.manifold == "cp2-analytic":
        raise ConfigError("mabuchi needs a grid with differentiation (torus or cp1)")
    tol = cfg.tolerances
    sec = cfg.section("mabuchi")
    quad_tol = float(sec.get("quadrature_tol", 1e-10))
    rep = Report("mabuchi", cfg.as_dict())
    g0 = base_metric(cfg)
    grid = g0.grid
    phis = [random_potential(grid, stream(cfg.seed, i), cfg) for i in range(3)]
    bump = random_potential(grid, stream(cfg.seed, 3), cfg)
    direction = random_potential(grid, stream(cfg.seed, 4), cfg)

    def work(t):
        a, b, _ = phis
        lin = mabuchi_energy(KahlerPath.linear(g0, a), t, tol=quad_tol)
        cub = mabuchi_energy(KahlerPath.cubic(g0, a), t, tol=quad_tol)
        det = mabuchi_energy(KahlerPath.detour(g0, a, bump), t, tol=quad_tol)
        m0a = lin.value
        mab = mabuchi_between(g0, a, b, t, tol=quad_tol)
        mb0 = mabuchi_between(g0, b, np.zeros(grid.shape), t, tol=quad_tol)
        deriv = mabuchi_derivative_check(g0, direction, t, require_holomorphic=False, tol=quad_tol)
        return {"t": t, "linear": lin.value, "cubic": cub.value, "detour": det.value,
                "path_gap": max(abs(lin.value - cub.value), abs(lin.value - det.value)),
                "cocycle": m0a + mab + mb0, "derivative": {k: v for k, v in deriv.items()},
                "converged": bool(lin.converged and cub.converged and det.converged)}

    rows = pmap(work, cfg.t, cfg.workers)
    for r in rows:
        t = r["t"]
        rep.checks.append(check_le(f"t={t}: path independence", r["path_gap"], tol["mabuchi_path"]))
        rep.checks.append(check_le(f"t={t}: cocycle", abs(r["cocycle"]), tol["mabuchi_cocycle"]))
        d = r["derivative"]
        rep.checks.append(check_le(f"t={t}: derivative identity", d["gap"], d["tolerance"]))
        rep.checks.append(check_true(f"t={t}: quadrature converged", r["converged"]))
    rep.results["per_t"] = rows
    return rep


def cmd_flow(cfg: ExperimentConfig, out=None) -> Report:
    if cfg.manifold == "cp2-analytic":
        raise ConfigError("flow needs a grid with differentiation (torus or cp1)")
    out = _out(out)
    tol = cfg.tolerances
    sec = cfg.section("flow")
    try:
        runs = int(sec.get("runs", cfg.count))
        budget = int(sec.get("budget", 200))
        h0 = float(sec.get("h0", 0.1))
    except ValueError as exc:
        raise ConfigError(f"[flow]: {exc}") from None
    rep = Report("flow", cfg.as_dict())
    g0 = base_metric(cfg)
    grid = g0.grid
    phis = [random_potential(grid, stream(cfg.seed, i), cfg) for i in range(runs)]
    tasks = [(i, t) for i in range(runs) for t in cfg.t]

    def work(task):
        i, t = task
        return run_flow(g0, phis[i], t, budget=budget, h0=h0, tol=tol["flow"])

    reports = pmap(work, tasks, cfg.workers)
    rows = []
    for (i, t), fr in zip(tasks, reports):
        s = fr.summary()
        s.update({"run": i, "t": t, "phi_sup": float(np.max(np.abs(fr.state.phi)))})
        rows.append(s)
        tag = f"run{i}_t{t:g}"
        if out is not None:
            write_log(out / f"flow_{tag}.csv", fr.history)
            rep.files.append(f"flow_{tag}.csv")
        _save_field(out, f"flow_{tag}_phi.kkf", fr.state.phi, grid, "phi", rep.files, {"t": repr(t)})
        rep.checks.append(check_true(f"{tag}: converged", fr.converged))
        rep.checks.append(check_le(f"{tag}: sup|S - sigma|", fr.sup_S_minus_sigma, tol["flow"]))
        rep.checks.append(check_true(f"{tag}: nu_t monotone", fr.nu_monotone))
        rep.checks.append(check_true(f"{tag}: Calabi energy monotone", fr.calabi_monotone))
    rep.results["runs"] = rows
    if "continuation" in sec:
        t_grid = parse_t_list(sec["continuation"])
        cr = continue_in_t(g0, np.zeros(grid.shape), t_grid, budget=budget, cold_start=phis[0] if phis else None,
                           h0=h0, tol=tol["flow"])
        rep.results["continuation"] = cr.summary()
        rep.checks.append(check_true("continuation succeeds at every rung", cr.success))
    return rep


def _self_adjoint_gap(g, rng):
    grid = g.grid
    a = grid.random_potential(rng, 1.0) + 1j * grid.random_potential(rng, 1.0)
    b = grid.random_potential(rng, 1.0)
    w = volume_weights(g)
    La, Lb = apply_L(a, g), apply_L(b, g)
    lhs = np.sum(La * np.conj(b) * w)
    rhs = np.sum(a * np.conj(Lb) * w)
    scale = np.sqrt(np.sum(np.abs(La) ** 2 * w) * np.sum(np.abs(b) ** 2 * w))
    return float(abs(lhs - rhs) / scale)


def cmd_kernel(cfg: ExperimentConfig, out=None) -> Report:
    if cfg.manifold == "cp2-analytic":
        raise ConfigError("kernel needs a grid with differentiation (torus or cp1)")
    out = _out(out)
    tol = cfg.tolerances
    rep = Report("kernel", cfg.as_dict())
    cases = metric_cases(cfg, include_base=True)
    g0 = cases[0].metric

    def work(ic):
        i, case = ic
        kb = kernel_basis(case.metric, seed=cfg.seed % (2 ** 32))
        sa = _self_adjoint_gap(case.metric, stream(cfg.seed, 1000 + i))
        return kb, sa

    results = pmap(work, list(enumerate(cases)), cfg.workers)
    rows = []
    base_dim = results[0][0].dim_complex
    for case, (kb, sa) in zip(cases, results):
        r = kb.report(case.label)
        r["self_adjoint_gap"] = sa
        rows.append(r)
        rep.checks.append(check_le(f"{case.label}: self-adjointness", sa, tol["self_adjoint"]))
        rep.checks.append(check_true(f"{case.label}: kernel dimension {kb.dim_complex} equals base {base_dim}",
                                     kb.dim_complex == base_dim))
        for j in range(kb.dim_complex):
            _save_field(out, f"{case.label}_kernel{j}.kkf", kb.functions[j + 1], case.metric.grid, f"kernel{j}",
                        rep.files)
    base = results[0][0]
    if cfg.manifold == "torus":
        gap = abs(base.smallest_nonconstant - FLAT_TORUS_GAP) / FLAT_TORUS_GAP
        rep.checks.append(check_le("flat torus: smallest nonconstant eigenvalue vs pi^4", gap, tol["kernel_gap"]))
        rep.checks.append(check_true("flat torus: no nonconstant holomorphy potentials", base.dim_complex == 0))
    else:
        rep.checks.append(check_true("cp1 fs: kernel complex dimension 3", base.dim_complex == 3))
        nxt = rows[0]["smallest_nonkernel_eigenvalue"]
        rep.checks.append(check_le("cp1 fs: first nonzero eigenvalue vs 96 pi^2", abs(nxt - FS_CP1_GAP) / FS_CP1_GAP,
                                   1e-6))
    transport = []
    pots = holomorphy_potentials(g0)
    for case in cases[1:]:
        for name, u in pots.items():
            tc = transport_check(u, case.phi, g0)
            transport.append({"label": case.label, "potential": name, "gradient_gap": tc["gradient_gap"],
                              "mean_gap": tc["mean_gap"]})
            rep.checks.append(check_le(f"{case.label} {name}: transported gradient", tc["gradient_gap"],
                                       tol["transport"]))
            rep.checks.append(check_le(f"{case.label} {name}: transported mean", tc["mean_gap"], tol["transport"]))
    rep.results["metrics"] = rows
    rep.results["transport"] = transport
    return rep


DEFAULT_SCENARIO = """
[action]
group = torus
weights = 1 -1

[start balanced]
x = 1, 1
expect = polystable

[start tilted]
x = 2, 0.3
expect = polystable

[start line]
x = 1, 0
expect = unstable
"""


def cmd_kempf_ness(cfg: ExperimentConfig, out=None) -> Report:
    tol = cfg.tolerances
    sec = cfg.section("kempf-ness")
    scenario = sec.get("scenario")
    if scenario is not None and cfg.source not in (None, "<config>") and not Path(scenario).is_absolute():
        scenario = str(Path(cfg.source).parent / scenario)
    try:
        action, starts = load_scenario(scenario if scenario is not None else DEFAULT_SCENARIO)
    except ScenarioError as exc:
        raise ConfigError(str(exc)) from None
    rep = Report("kempf-ness", cfg.as_dict())
    records = run_scenario(action, starts, workers=cfg.workers)
    rng = stream(cfg.seed, 0)
    for st, rec in zip(starts, records):
        rep.checks.append(check_true(f"{st['name']}: verdict {rec['verdict']}"
                                     + (f" (expected {st['expect']})" if st["expect"] else ""), rec["pass"]))
        x = st["x"]
        probes = []
        for _ in range(3):
            xi = rng.standard_normal(action.rank)
            xi /= np.linalg.norm(xi)
            cp = convexity_probe(action, x, xi)
            gi = gradient_identity_gap(action, x, xi)
            probes.append({"min_second_difference": cp["min_second_difference"], "gradient_gap": gi["gap"]})
            rep.checks.append(check_true(f"{st['name']}: convexity", cp["min_second_difference"] >= -tol["convexity"]))
            rep.checks.append(check_le(f"{st['name']}: gradient identity", gi["gap"], 1e-10))
        rec["probes"] = probes
        sc = stabilizer_character(action, x, seed=int(rng.integers(2 ** 31)))
        rec["stabilizer"] = sc.record()
        rep.checks.append(check_le(f"{st['name']}: character on brackets", sc.character_gap, 1e-10))
        rep.checks.append(check_le(f"{st['name']}: equivariance", sc.equivariance_gap, tol["equivariance"]))
        points = [("start", x)]
        if rec["verdict"] == "polystable":
            points.append(("minimizer", np.array([complex(a, b) for a, b in rec["minimizer"]])))
        ext = {}
        for tag, p in points:
            crit = float(np.linalg.norm(criticality_gradient(action, p)))
            if crit > 1e-8:
                ext[tag] = {"is_extremal": False, "criticality": crit}
                continue
            er = extremal_decomposition(action, p)
            ext[tag] = er.record()
            rep.checks.append(check_true(f"{st['name']} {tag}: ad(i mu) eigenvalues >= 0", er.nonnegative))
            rep.checks.append(check_true(f"{st['name']} {tag}: zero eigenspace is the complexified compact stabilizer",
                                         er.zero_space_is_compact_complexified))
            rep.checks.append(check_le(f"{st['name']} {tag}: i mu central", er.center_gap, 1e-10))
            if er.moment_zero:
                rep.checks.append(check_true(f"{st['name']} {tag}: mu = 0 gives a reductive stabilizer", er.reductive))
        rec["extremal"] = ext
    rep.results["action"] = {"kind": action.kind, "dim": action.dim,
                             "weights": action.weights.tolist() if action.weights is not None else None,
                             "spins": [str(s) for s in action.spins]}
    rep.results["starts"] = records
    return rep


COMMANDS = {
    "chern": cmd_chern,
    "scalar": cmd_scalar,
    "sigma": cmd_sigma,
    "futaki": cmd_futaki,
    "mabuchi": cmd_mabuchi,
    "flow": cmd_flow,
    "kernel": cmd_kernel,
    "kempf-ness": cmd_kempf_ness,
}
