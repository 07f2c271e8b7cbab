import csv

import numpy as np
import pytest

from kahlerkit.curvature import CurvatureError
from kahlerkit.flows import (LOG_COLUMNS, FlowError, FlowState, continue_in_t, extremal_residual, flow_step,
                             run_flow, write_log)
from kahlerkit.manifold.calculus import flat_metric, metric_from_potential
from kahlerkit.manifold.fubini_study import fubini_study
from kahlerkit.manifold.grids import TorusGrid

# accepted steps of the cosine regression flow on the N = 64 torus, pinned on the first audited run
COSINE_FLOW_STEPS = 7
# steps of the perturbed CP^1 flow (seed 5, amplitude 0.005)
CP1_FLOW_STEPS = 19


@pytest.fixture(scope="module")
def torus64():
    return flat_metric(TorusGrid(1, 64))


def test_flat_start_is_a_fixed_point(flat1):
    state = FlowState(phi=np.zeros(flat1.grid.shape), t=0.1)
    flow_step(state, flat1)
    assert np.max(np.abs(state.phi)) <= 1e-12
    assert state.last_update <= 1e-12


def test_cosine_regression(torus64):
    x, _ = torus64.grid.coords()
    rep = run_flow(torus64, 0.01 * np.cos(2 * np.pi * x), 0.1)
    assert rep.converged and rep.steps == COSINE_FLOW_STEPS
    assert rep.sup_S_minus_sigma < 1e-6
    assert np.max(np.abs(rep.state.phi)) < 1e-5
    sups = [r["sup_S_minus_sigma"] for r in rep.history]
    assert all(b < a for a, b in zip(sups, sups[1:]) if a > 1e-10)
    assert rep.nu_monotone and rep.calabi_monotone
    ext = [r["extremal_residual"] for r in rep.history]
    assert ext[1] > 0 and ext[-1] < ext[1]


@pytest.mark.parametrize("t", [0.0, 0.05, 0.2])
def test_random_starts_converge_to_flat(flat1, rng, t):
    rep = run_flow(flat1, flat1.grid.random_potential(rng, 0.005), t)
    assert rep.converged
    assert rep.sup_S_minus_sigma < 1e-6
    assert np.max(np.abs(rep.state.phi)) < 1e-5
    assert rep.nu_monotone and rep.calabi_monotone


def test_near_degenerate_start_backtracks(flat1):
    # start at 0.9 of the positivity margin and with a huge initial step
    phi = flat1.grid.random_potential(np.random.default_rng(1), 1.0)
    phi *= 0.9 / -float(np.min(np.real(flat1.grid.hessian(phi)[0, 0])))
    assert metric_from_potential(flat1, phi).min_eigenvalue().min() == pytest.approx(0.1, rel=1e-9)
    rep = run_flow(flat1, phi, 0.0, h0=1e4, budget=400)
    assert rep.rejections > 0
    assert rep.converged and np.max(np.abs(rep.state.phi)) < 1e-5
    assert rep.nu_monotone and rep.calabi_monotone


def test_invisible_modes_never_move(flat1):
    from kahlerkit.flows import preconditioner

    idx = np.indices(flat1.grid.shape)
    nyquist = (-1.0) ** (idx[0] + idx[1])
    assert np.max(np.abs(preconditioner(flat1.grid, 1e4)(nyquist))) < 1e-12


def test_consecutive_rejections_surface(flat1):
    x, _ = flat1.grid.coords()
    state = FlowState(phi=0.05 * np.cos(2 * np.pi * x), t=0.0, h=1e30)
    with pytest.raises(FlowError):
        flow_step(state, flat1, preconditioned=False)


def test_budget_exhaustion_is_reported(flat1, rng):
    rep = run_flow(flat1, flat1.grid.random_potential(rng, 0.005), 0.1, budget=2)
    assert not rep.converged and rep.steps == 2


def test_inadmissible_start_rejected():
    g, _ = fubini_study(2)
    from kahlerkit.flows import run_flow as rf

    with pytest.raises(CurvatureError):
        rf(g, np.zeros(g.grid.shape), -0.7)


def test_cp1_flow(fs1):
    phi = fs1.grid.random_potential(np.random.default_rng(5), 0.005)
    rep = run_flow(fs1, phi, 0.1)
    assert rep.converged and rep.steps == CP1_FLOW_STEPS
    assert rep.sup_S_minus_sigma < 1e-6
    assert rep.nu_monotone and rep.calabi_monotone


def test_extremal_residual(flat1, fs1, rng):
    assert extremal_residual(flat1, 0.1) == 0
    assert extremal_residual(fs1, 0.1) <= 1e-8
    g = metric_from_potential(flat1, flat1.grid.random_potential(rng, 0.005))
    assert extremal_residual(g, 0.1) > 1e-6


def test_log_file(tmp_path, flat1, rng):
    rep = run_flow(flat1, flat1.grid.random_potential(rng, 0.005), 0.1, log_path=tmp_path / "flow.csv")
    with open(tmp_path / "flow.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert list(rows[0]) == LOG_COLUMNS
    assert len(rows) == rep.steps + 1
    assert float(rows[-1]["calabi_energy"]) == rep.calabi_energy
    write_log(tmp_path / "again.csv", rep.history)
    assert (tmp_path / "again.csv").read_text() == (tmp_path / "flow.csv").read_text()


def test_continuation_on_torus(flat1, rng):
    cold = flat1.grid.random_potential(rng, 0.005)
    grid_t = np.round(np.arange(0, 0.3001, 0.05), 12)
    rep = continue_in_t(flat1, np.zeros(flat1.grid.shape), grid_t, cold_start=cold)
    assert rep.success and rep.frontier is None
    assert [r.t for r in rep.rungs] == list(grid_t)
    for r in rep.rungs:
        assert r.drift == 0
        # warm starts never need more iterations than cold starts (20% slack)
        assert r.steps <= 1.2 * r.cold_steps


def test_continuation_on_cp1(fs1):
    rep = continue_in_t(fs1, np.zeros(fs1.grid.shape), [0.0, 0.1, 0.2, 0.3], compare_cold=False)
    assert rep.success
    assert max(r.drift for r in rep.rungs) < 1e-10


def test_continuation_needs_extremal_start(flat1, rng):
    with pytest.raises(FlowError):
        continue_in_t(flat1, flat1.grid.random_potential(rng, 0.005), [0.0, 0.1])
    with pytest.raises(ValueError):
        continue_in_t(flat1, np.zeros(flat1.grid.shape), [0.1, 0.0])
