import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles as O
from conftest import toy_params
from epictrl.agent import (agent_objective, backward_agent_adjoints, best_response, foc_residual, infection_drop,
                           inner_sweep, schedule_arrays, solve_social_distancing_foc)
from epictrl.core import geometric_schedule
from epictrl.dynamics import simulate
from epictrl.errors import BoundaryError, ConvergenceError, NumericError, ParameterError
from epictrl.triangular import Triangular


def _random_run(prm, seed=0):
    T = prm.horizon
    rng = np.random.default_rng(seed)
    alpha = Triangular(rng.uniform(0.2, 0.9, T * (T + 1) // 2), T)
    lam = rng.uniform(0.4, 1, T)
    return simulate(prm, lam, 0.05, alpha), alpha, lam


# --- objective -------------------------------------------------------------

def test_objective_disease_free_no_distancing():
    T = 6
    prm = toy_params(T, e0=0.0)
    sched = geometric_schedule(0.2, T)
    p, q = schedule_arrays(sched, T)
    parts = agent_objective(simulate(prm, 1.0, 0.0, 1.0), sched, include_penalty=False)
    dA = prm.delta_a
    t = np.arange(1, T + 1)
    expected = np.sum((1 - dA) * dA ** (t - 1) * (q + dA / (1 - dA) * p))
    assert parts.cost == 0
    assert parts.y_a == pytest.approx(expected, rel=1e-14)


def test_penalty_at_half_participation():
    T = 3
    prm = toy_params(T)
    sched = geometric_schedule(0.2, T)
    _, q = schedule_arrays(sched, T)
    parts = agent_objective(simulate(prm, 1.0, 0.05, 0.5), sched)
    assert np.log(0.5) * 2 == pytest.approx(-1.3862944, abs=1e-7)
    dA = prm.delta_a
    per_bin = np.log(0.5) * 2
    expected = (1 - dA) * prm.c * prm.kappa * sum(dA ** (t - 1) * q[t - 1] * t * per_bin for t in range(1, 4))
    assert parts.penalty == pytest.approx(expected, rel=1e-13)
    assert parts.penalty < 0


def test_objective_matches_direct_summation():
    T = 3
    prm = toy_params(T)
    sched = geometric_schedule(0.2, T)
    p, q = schedule_arrays(sched, T)
    tr, alpha, lam = _random_run(prm)
    agg = O.forward(prm, lam, np.full(T, 0.05), O.alpha_rows(alpha), T)
    ref = O.agent_payoff(prm, p, q, agg, O.individual_path(prm, agg, O.alpha_rows(alpha)))
    assert agent_objective(tr, sched).total == pytest.approx(ref, abs=1e-12)


def test_boundary_alpha_has_infinite_penalty():
    prm = toy_params(3)
    with pytest.raises(BoundaryError):
        agent_objective(simulate(prm, 1.0, 0.05, 1.0), geometric_schedule(0.2, 3))


# --- first-order condition -------------------------------------------------------

def test_foc_small_kappa_interior():
    assert solve_social_distancing_foc(0.3, 0.5, 1e-12) == pytest.approx(0.7, abs=1e-6)


def test_foc_small_kappa_clamps_to_zero():
    a = solve_social_distancing_foc(1.5, 0.5, 1e-12)
    assert 0 < a < 1e-5


def test_foc_residual_moderate_kappa():
    a = solve_social_distancing_foc(0.3, 0.5, 1e-3)
    assert abs(foc_residual(a, 0.3, 0.5, 1e-3)) < 1e-12
    # independent bracketing check of the same root
    lo, hi = 1e-300, 1 - 1e-16
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if foc_residual(mid, 0.3, 0.5, 1e-3) > 0:
            lo = mid
        else:
            hi = mid
    assert a == pytest.approx(0.5 * (lo + hi), abs=1e-14)


def test_foc_rejects_bad_input():
    with pytest.raises(NumericError):
        solve_social_distancing_foc(float("nan"), 0.5, 1e-3)
    with pytest.raises(ParameterError):
        solve_social_distancing_foc(0.3, 0.0, 1e-3)
    with pytest.raises(ParameterError):
        solve_social_distancing_foc(0.3, 0.5, 0.0)


@given(st.floats(0.0, 3.0), st.floats(-12, -1), st.floats(-4, 0))
def test_foc_residual_property(rhs, log_k, log_m):
    k, m = 10 ** log_k, 10 ** log_m
    a = solve_social_distancing_foc(rhs, m, k)
    assert 0 < a < 1
    assert abs(foc_residual(a, rhs, m, k)) < 1e-12


@given(st.floats(-2.0, 0.0), st.floats(-12, -1), st.floats(-4, 0))
def test_foc_negative_side_returns_best_double(rhs, log_k, log_m):
    # roots next to 1 cannot always be resolved to 1e-12; the solver must at
    # least return the double whose residual is smallest
    k, m = 10 ** log_k, 10 ** log_m
    a = solve_social_distancing_foc(rhs, m, k)
    res = abs(foc_residual(a, rhs, m, k))
    for nb in (np.nextafter(a, 0.0), np.nextafter(a, 1.0)):
        if 0 < nb < 1:
            assert res <= abs(foc_residual(nb, rhs, m, k))


@given(st.floats(0.001, 0.999), st.floats(-3, 0))
def test_foc_small_kappa_matches_clamp(rhs, log_m):
    a = solve_social_distancing_foc(rhs, 10 ** log_m, 1e-12)
    assert abs(a - (1 - rhs)) < 1e-5


# --- adjoints ------------------------------------------------------------------

def test_adjoints_match_direct_recursion(toy):
    prm, sched, p, q = toy
    T = prm.horizon
    tr, alpha, lam = _random_run(prm)
    adj = backward_agent_adjoints(tr, sched)
    agg = O.forward(prm, lam, np.full(T, 0.05), O.alpha_rows(alpha), T)
    ref = O.agent_adjoints(prm, p, q, agg)
    for t in range(1, T + 1):
        np.testing.assert_allclose(adj.S.row(t), ref["SS"][t - 1], rtol=1e-12)
        np.testing.assert_allclose(adj.I.row(t), ref["II"][t - 1], rtol=1e-12)
        np.testing.assert_allclose(adj.R.row(t), ref["RR"][t - 1], rtol=1e-12)
    np.testing.assert_allclose(adj.IT, ref["ITa"], rtol=1e-12)
    np.testing.assert_allclose(adj.RT, ref["RTa"], rtol=1e-12)
    np.testing.assert_allclose(adj.H, ref["Ha"], rtol=1e-12)


def test_terminal_condition(toy):
    prm, sched, p, q = toy
    T = prm.horizon
    adj = backward_agent_adjoints(_random_run(prm)[0], sched)
    e = p[T - 1] * prm.delta_a ** T * (1 + prm.c / 2)
    for v in (adj.S.row(T), adj.I.row(T), adj.R.row(T), adj.IT[T - 1], adj.RT[T - 1], adj.H[T - 1]):
        np.testing.assert_allclose(v, e, rtol=1e-15)


def test_known_recovered_one_step_from_terminal(toy):
    prm, sched, p, q = toy
    T = prm.horizon
    tr, _, lam = _random_run(prm)
    adj = backward_agent_adjoints(tr, sched)
    dA, c = prm.delta_a, prm.c
    expected = adj.RT[T - 1] + (1 - dA) * dA ** (T - 1) * (lam[T - 1] + c / 2) * q[T - 1] \
        + dA ** (T - 1) * (1 + c / 2) * p[T - 2]
    assert adj.RT[T - 2] == pytest.approx(expected, rel=1e-14)


def test_myopic_agent_has_zero_adjoints():
    T = 5
    prm = toy_params(T, delta_a=0.0)
    adj = backward_agent_adjoints(_random_run(prm)[0], geometric_schedule(0.2, T))
    for arr in (adj.S.data, adj.I.data, adj.R.data, adj.IT, adj.RT, adj.H):
        assert np.all(arr == 0)


def _adjoint_value(adj, comp, t, k):
    if comp in ("S", "I", "R"):
        return getattr(adj, comp).row(t)[k - 1]
    return getattr(adj, comp)[t - 1]


@pytest.mark.parametrize("T", [4, 5])
def test_adjoints_match_finite_differences(T):
    prm = toy_params(T)
    sched = geometric_schedule(0.2, T)
    p, q = schedule_arrays(sched, T)
    tr, alpha, lam = _random_run(prm)
    adj = backward_agent_adjoints(tr, sched)
    A = O.alpha_rows(alpha)
    agg = O.forward(prm, lam, np.full(T, 0.05), A, T)
    worst = 0.0
    # perturbing the state produced for date s probes the adjoint of date s-1
    for s in range(2, T + 2):
        for comp, nb in (("S", s), ("I", s - 1), ("R", s - 1), ("IT", 0), ("RT", 0), ("H", 0)):
            for k in (range(1, nb + 1) if nb else [0]):
                fd = O.central_diff(
                    lambda e: O.agent_payoff(prm, p, q, agg, O.individual_path(prm, agg, A, inject=(s, comp, k, e))),
                    1e-6)
                an = _adjoint_value(adj, comp, s - 1, k)
                worst = max(worst, abs(fd - an) / max(abs(an), 1e-12))
    assert worst < 1e-4


def test_infection_drop_definition(toy):
    prm, sched, _, _ = toy
    tr, _, _ = _random_run(prm)
    adj = backward_agent_adjoints(tr, sched)
    tau = tr.policy.tau
    drop = infection_drop(adj, tau, prm.gamma)
    t, g = 2, prm.gamma
    s = adj.S.row(t)
    ref = (1 - tau[1] * g) * s[:t] + tau[1] * g * s[t] - (1 - tau[1]) * adj.I.row(t) - tau[1] * adj.IT[t - 1]
    np.testing.assert_allclose(drop.row(t), ref, rtol=1e-15)


# --- inner sweep -----------------------------------------------------------------

@pytest.mark.parametrize("extra", [dict(delta_a=0.0), dict(m_i=0.0)])
def test_no_infection_disutility_means_no_distancing(extra):
    # the dynamic part of the right side vanishes for a myopic agent, or when
    # infection changes neither output nor cost (no hospital, no tests)
    T = 20
    prm = toy_params(T, phi_plus=0.0, phi_minus=0.0, kappa=1e-12, **extra)
    res = inner_sweep(0.8, 0.0, prm, geometric_schedule(0.05, T), tol=1e-10)
    g = res.trajectory.grid
    mass = (g.S.data + g.I.data + g.R.data)[:res.alpha.data.size]
    assert res.alpha.data[mass > 0].min() > 1 - 1e-4
    assert res.distancing.max() < 1e-4


def test_fixed_point_satisfies_own_first_order_condition():
    T = 4
    prm = toy_params(T)
    sched = geometric_schedule(0.2, T)
    _, q = schedule_arrays(sched, T)
    lam = np.array([0.5, 0.7, 0.9, 1.0])
    res = inner_sweep(lam, 0.05, prm, sched, tol=1e-12, eps=0.5)
    assert res.foc_residual < 1e-8
    agg = O.forward(prm, lam, np.full(T, 0.05), O.alpha_rows(res.alpha), T)
    ups = O.agent_adjoints(prm, np.diff(np.concatenate([[0], 1 - q])), q, agg)
    for t in range(1, T + 1):
        assert np.max(np.abs(O.agent_foc_scaled(prm, q, agg, ups, t))) < 1e-8
    again, _ = best_response(res.trajectory, sched)
    assert np.max(np.abs(again.data - res.alpha.data)) < 1e-11


def test_fixed_point_matches_brute_force_best_response():
    T = 3
    prm = toy_params(T)
    sched = geometric_schedule(0.2, T)
    p, q = schedule_arrays(sched, T)
    lam = np.array([0.6, 0.8, 1.0])
    xb = np.full(T, 0.05)
    res = inner_sweep(lam, xb, prm, sched, tol=1e-12, eps=0.5)
    grid = np.arange(1, 1000) / 1000
    ind = O.alpha_rows(res.alpha)
    # coordinate-wise grid search for one agent facing the aggregate at the
    # fixed point, repeated until the profile settles
    for _ in range(3):
        agg = O.forward(prm, lam, xb, ind, T)
        moved = 0.0
        for t in range(1, T + 1):
            for k in range(t):
                vals = []
                for a in grid:
                    trial = [r.copy() for r in ind]
                    trial[t - 1][k] = a
                    vals.append(O.agent_payoff(prm, p, q, agg, O.individual_path(prm, agg, trial)))
                best = grid[int(np.argmax(vals))]
                moved = max(moved, abs(best - ind[t - 1][k]))
                ind[t - 1][k] = best
        if moved == 0:
            break
    got = np.concatenate(ind)
    assert np.max(np.abs(got - res.alpha.data)) <= 1e-3


def test_myopic_fixed_point_is_static_closed_form():
    T = 10
    prm = toy_params(T, delta_a=0.0, kappa=1e-12)
    res = inner_sweep(0.7, 0.05, prm, geometric_schedule(0.1, T), tol=1e-12, eps=0.5)
    tr = res.trajectory
    bs = prm.betas[1]
    for t in range(1, T + 1):
        S, I, R = tr.grid.S.row(t), tr.grid.I.row(t), tr.grid.R.row(t)
        N = S + I + R
        ok = N > 1e-6
        rhs = (prm.phi_plus / prm.c * S / N * bs * tr.Ihat[t - 1]
               + prm.phi_minus / prm.c * I / N * bs * tr.Shat[t - 1])
        closed = np.clip(1 - rhs, 0, 1)
        assert np.max(np.abs(res.alpha.row(t)[ok] - closed[ok])) < 1e-5


def test_inner_sweep_reports_non_convergence():
    prm = toy_params(4)
    with pytest.raises(ConvergenceError) as err:
        inner_sweep(1.0, 0.05, prm, geometric_schedule(0.2, 4), tol=1e-14, max_iter=2)
    assert err.value.last_distance > 0


def test_inner_sweep_rejects_bad_settings():
    prm = toy_params(4)
    with pytest.raises(ParameterError):
        inner_sweep(1.0, 0.05, prm, geometric_schedule(0.2, 4), eps=0.0)
    with pytest.raises(ParameterError):
        inner_sweep(1.0, 0.05, prm, geometric_schedule(0.2, 4), tol=0.0)
