import math

import numpy as np
import pytest

from kahler_flow import flow, radial

# dt of the n = 1 Einstein model on 256 nodes at sigma = 0.5, recorded on the first run
CFL_REGRESSION = float.fromhex("0x1.5debc6affe34cp-14")


def model(n):
    return radial.model_ball(n, n + 1.0)


def perturbed(n):
    return radial.RadialPotential(n=n, family="perturbed_model", c=n + 1.0, eps=0.05)


@pytest.fixture(scope="module")
def pert_state():
    return flow.init_flow(perturbed(1), 128)


# initial state ---------------------------------------------------------------


@pytest.mark.parametrize("u", [model(1), model(3), perturbed(2), radial.flat(2)], ids=str)
def test_init_reconstructs_initial_metric(u):
    st = flow.init_flow(u, 64)
    assert not np.any(st.phi) and st.t == 0.0
    a, b = flow.metric_pair(st)
    assert np.array_equal(a[:-1], st.a0[:-1])
    assert np.array_equal(b[:-1], st.b0[:-1])


def test_init_guards():
    with pytest.raises(ValueError, match="N >= 16"):
        flow.init_flow(model(1), 8)
    with pytest.raises(ValueError):
        flow.init_flow(model(1), 64, sigma=0.0)


# reference form ----------------------------------------------------------------


def test_background_limits(pert_state):
    a, b = flow.background_pair(pert_state, 0.0)
    assert np.array_equal(a, pert_state.a0) and np.array_equal(b, pert_state.b0)
    a, b = flow.background_pair(pert_state, 50.0)
    scale = math.exp(-50) * (1 + np.abs(pert_state.b0).max())
    assert np.abs(a - pert_state.dF0).max() < scale
    assert np.abs(b - pert_state.sdF0).max() < scale


@pytest.mark.parametrize("n", [1, 2, 3])
def test_background_is_static_for_einstein_model(n):
    st = flow.init_flow(model(n), 64)
    for t in (0.5, 3.0, 20.0):
        a, b = flow.background_pair(st, t)
        assert np.allclose(a, st.a0, rtol=1e-13, atol=0)
        assert np.allclose(b, st.b0, rtol=1e-13, atol=0)


# right-hand side ---------------------------------------------------------------


@pytest.mark.parametrize("n", [1, 2, 3])
def test_rhs_vanishes_at_fixed_point(n):
    st = flow.init_flow(model(n), 128)
    assert np.abs(flow.rhs(st)).max() <= 1e-14
    assert flow.rhs(st).size == st.N


@pytest.mark.parametrize("k", [-0.3, 0.7])
def test_rhs_of_constant_potential(k):
    st = flow.init_flow(model(2), 64).with_phi(np.full(65, k), 0.0)
    assert np.allclose(flow.rhs(st), -k, rtol=0, atol=1e-14)


def test_rhs_vanishes_initially_for_any_metric(pert_state):
    assert not np.any(flow.rhs(pert_state))


def test_rhs_reports_positivity_failure():
    st = flow.init_flow(model(1), 64)
    phi = np.zeros(65)
    phi[20] = 1.0  # a sharp spike makes the radial eigenvalue negative next to it
    with pytest.raises(flow.PositivityError) as info:
        flow.rhs(st.with_phi(phi, 0.0))
    assert info.value.node in (19, 20, 21)


# time step ---------------------------------------------------------------------


def test_cfl_regression_constant():
    st = flow.init_flow(model(1), 256, sigma=0.5)
    assert flow.cfl_dt(st) == CFL_REGRESSION
    assert flow.cfl_dt(flow.init_flow(model(1), 256, sigma=0.5)) == CFL_REGRESSION


def test_cfl_scales_with_grid():
    dts = [flow.cfl_dt(flow.init_flow(model(1), N)) for N in (128, 256, 512)]
    assert dts[0] / dts[1] == pytest.approx(4, rel=2e-2)
    assert dts[1] / dts[2] == pytest.approx(4, rel=2e-2)


def test_cfl_refuses_zero_safety_factor():
    with pytest.raises(ValueError):
        flow.cfl_dt(flow.init_flow(model(1), 64), sigma=0.0)


def test_step_guards(pert_state):
    bound = flow.cfl_dt(pert_state)
    with pytest.raises(ValueError, match="CFL"):
        flow.step(pert_state, 1.01 * bound)
    with pytest.raises(ValueError):
        flow.step(pert_state, 0.0)


def test_step_report_and_purity(pert_state):
    before = pert_state.phi.copy()
    new, rep = flow.step(pert_state, flow.cfl_dt(pert_state))
    assert np.array_equal(pert_state.phi, before)
    assert new.t == rep.dt and rep.dt <= rep.cfl_bound
    assert rep.positivity_margin > 0
    assert new.phi[-1] == 0.0
    again, _ = flow.step(pert_state, rep.dt)
    assert np.array_equal(again.phi, new.phi)


def test_step_keeps_fixed_point():
    st = flow.init_flow(model(2), 64)
    for _ in range(20):
        st, _ = flow.step(st, flow.cfl_dt(st))
    assert np.abs(st.phi).max() <= 1e-14


# driver ------------------------------------------------------------------------


def test_run_until_fixed_point():
    st = flow.init_flow(model(1), 128)
    seen = []
    st, recs = flow.run_until(st, 5.0, cadence=0.5, observer=lambda s, k: seen.append((k, s.t)) or s)
    assert [k for k, _ in seen] == list(range(11))
    assert seen[-1][1] == 5.0 and st.t == 5.0
    assert max(np.abs(r.phi).max() for r in recs) <= 1e-12


def test_run_until_noop_when_already_past():
    st = flow.init_flow(model(1), 32)
    st.t = 2.0
    st, recs = flow.run_until(st, 1.0, cadence=0.5, observer=lambda s, k: s)
    assert recs == [] and st.t == 2.0


def test_observer_gets_readonly_copies():
    st = flow.init_flow(perturbed(1), 64)

    def obs(snap, k):
        with pytest.raises(ValueError):
            snap.phi[0] = 1.0
        return None

    flow.run_until(st, 0.2, cadence=0.1, observer=obs)


def test_record_schedule_resume():
    assert list(flow.record_times(0.0, 1.0, 0.25)) == [(0, 0.0), (1, 0.25), (2, 0.5), (3, 0.75), (4, 1.0)]
    assert list(flow.record_times(0.5, 1.0, 0.25, start_index=3)) == [(3, 0.75), (4, 1.0)]
    assert list(flow.record_times(1.0, 1.0, 0.25, start_index=5)) == []
    assert list(flow.record_times(0.0, 0.6, 0.25))[-1] == (3, 0.6)


def test_early_stop():
    class Rec:
        def __init__(self, r):
            self.einstein_residual = r

    st = flow.init_flow(model(1), 32)
    st, recs = flow.run_until(st, 5.0, cadence=0.5, observer=lambda s, k: Rec(1e-3 / (k + 1)), early_stop=2.1e-4)
    assert len(recs) == 5


def test_determinism():
    runs = []
    for _ in range(2):
        st = flow.init_flow(perturbed(2), 96)
        flow.advance_to(st, 0.7)
        runs.append((st.phi.copy(), st.steps, st.last_dt))
    assert np.array_equal(runs[0][0], runs[1][0])
    assert runs[0][1:] == runs[1][1:]


def test_advance_lands_exactly_and_is_composable():
    a = flow.init_flow(perturbed(1), 64)
    flow.advance_to(a, 0.3)
    assert a.t == 0.3
    b = flow.init_flow(perturbed(1), 64)
    flow.advance_to(b, 0.1)
    flow.advance_to(b, 0.3)
    # stopping at 0.1 alters the step sequence, but not beyond the integrator error
    assert np.abs(a.phi - b.phi).max() < 1e-8


def test_nan_guard():
    st = flow.init_flow(model(1), 32)
    st.phi[5] = np.nan
    with pytest.raises((flow.NonFiniteError, flow.PositivityError)):
        flow.advance_to(st, 0.1)


# convergence -------------------------------------------------------------------


def test_time_derivative_matches_rhs():
    st = flow.init_flow(perturbed(1), 96)
    flow.advance_to(st, 0.5)
    errs = []
    for h in (0.08, 0.04):
        a = flow.init_flow(perturbed(1), 96)
        flow.advance_to(a, 0.5 - h)
        b = a.copy()
        flow.advance_to(b, 0.5 + h)
        errs.append(np.abs((b.phi - a.phi)[:-1] / (2 * h) - flow.rhs(st)).max())
    assert errs[1] < errs[0] / 3.5 and errs[1] < 1e-6


def test_spatial_self_convergence():
    u = perturbed(1)
    vals = []
    for k, N in enumerate((64, 128, 256)):
        st = flow.init_flow(u, N)
        flow.advance_to(st, 1.0)
        vals.append(np.abs(st.phi[:: 2**k]).max())
    ratio = abs(vals[0] - vals[1]) / abs(vals[1] - vals[2])
    assert ratio > 2**1.8


def test_perturbed_flow_moves_and_stays_positive():
    st = flow.init_flow(perturbed(2), 128)
    flow.advance_to(st, 2.0)
    a, b = flow.metric_pair(st)
    assert np.abs(st.phi).max() > 1e-5
    assert a[:-1].min() > 0 and b[:-1].min() > 0
