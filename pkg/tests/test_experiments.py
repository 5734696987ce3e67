import numpy as np
import pytest

from conftest import toy_params
from epictrl import government as G
from epictrl.core import geometric_schedule
from epictrl.errors import BudgetError, HorizonError, ParameterError
from epictrl.experiments import (DEFAULT_XI_GRID, HIGH_TESTING_COUNT, ParetoFrontier, ParetoPoint, Scenario,
                                 apply_scenario, pareto_frontier, run_scenario, small_horizon_oracle)
from epictrl.params import POPULATION, ModelParams


def _deadly(xi=120.0, T=3):
    prm = toy_params(T, beta_w=0.9, m_i=0.9, m_h=0.9, t_h=1, xi=xi)
    return prm, geometric_schedule(0.2, T), np.full(T, 0.05)


FAST = dict(eps=0.2, tol=1e-8, inner_tol=1e-12, inner_eps=0.5)


# --- scenarios -------------------------------------------------------------------

def test_scenario_validation():
    with pytest.raises(ParameterError):
        Scenario("lockdown_forever")
    with pytest.raises(ParameterError):
        Scenario("eta_split")
    with pytest.raises(ParameterError):
        Scenario("eta_split", eta=1.5)
    with pytest.raises(ParameterError):
        Scenario("baseline", eta=0.5)
    with pytest.raises(ParameterError):
        Scenario("baseline", overrides={"not_a_field": 1})
    assert Scenario("eta_split", eta=0.9).label == "eta_split_0.9"
    assert Scenario("myopic").label == "myopic"


def test_default_grid_has_31_points():
    assert DEFAULT_XI_GRID == tuple(float(x) for x in range(31))


@pytest.mark.parametrize("kind,eta,check", [
    ("baseline", None, lambda p, x, b, xb: p == b and np.array_equal(x, xb)),
    ("high_testing", None, lambda p, x, b, xb: p == b and np.all(x == HIGH_TESTING_COUNT / POPULATION)),
    ("efficient_testing", None, lambda p, x, b, xb: p.gamma == b.gamma / 2 and np.array_equal(x, xb)),
    ("high_and_efficient", None,
     lambda p, x, b, xb: p.gamma == b.gamma / 2 and np.all(x == HIGH_TESTING_COUNT / POPULATION)),
    ("myopic", None, lambda p, x, b, xb: p.delta_a == 0.0 and p.delta_g == b.delta_g),
    ("eta_split", 0.9, lambda p, x, b, xb: np.allclose(p.betas, (0.9 * 0.4092, 0.1 * 0.4092))),
    ("no_lockdown", None, lambda p, x, b, xb: p == b),
])
def test_scenario_patches(kind, eta, check):
    base = ModelParams(horizon=30)
    xb = np.linspace(1e-4, 1e-3, 30)
    p, x = apply_scenario(Scenario(kind, eta), base, xb)
    assert check(p, x, base, xb)
    assert np.array_equal(xb, np.linspace(1e-4, 1e-3, 30))  # caller's path untouched


def test_overrides_are_applied():
    p, _ = apply_scenario(Scenario("efficient_testing", overrides={"c": 0.9}), ModelParams(horizon=10), 0.0)
    assert p.c == 0.9 and p.gamma == ModelParams().gamma / 2


def test_no_lockdown_keeps_economy_open():
    prm, sched, xb = _deadly(T=4)
    r = run_scenario(Scenario("no_lockdown"), prm, xb, sched)
    assert np.all(r.lam == 1.0)
    assert r.policy is None and r.converged
    assert np.max(np.abs(r.trajectory.grid.mass() - 1)) < 1e-10


def test_no_social_distancing_pins_participation():
    prm, sched, xb = _deadly(T=4)
    r = run_scenario(Scenario("no_social_distancing"), prm, xb, sched, **FAST)
    assert np.all(r.trajectory.policy.alpha.data == 1.0)
    assert np.all(r.distancing() == 0)
    assert r.converged and np.all((r.lam >= prm.lambda_bar) & (r.lam <= 1))


@pytest.mark.parametrize("kind,eta", [("baseline", None), ("high_and_efficient", None), ("myopic", None),
                                      ("eta_split", 0.7)])
def test_every_scenario_conserves_mass(kind, eta):
    prm, sched, xb = _deadly(T=4)
    r = run_scenario(Scenario(kind, eta), prm, xb, sched, **FAST)
    g = r.trajectory.grid
    assert r.converged
    assert np.max(np.abs(g.mass() - 1)) < 1e-10
    assert np.all(np.diff(g.D) >= 0)
    assert r.cumulative_deaths()[-1] == pytest.approx(g.D[-1] * POPULATION)


# --- Pareto frontier ----------------------------------------------------------------

def test_frontier_is_sorted_and_monotone():
    prm, sched, xb = _deadly()
    seen = []
    fr = pareto_frontier([500, 0, 60, 2000, 20, 120], prm, xb, sched, callback=seen.append, **FAST)
    xi, out, surv = fr.arrays()
    assert list(xi) == [0, 20, 60, 120, 500, 2000] and not fr.skipped
    assert [p.xi for p in seen] == list(xi)
    assert fr.is_monotone()
    assert out[0] > out[-1] and surv[-1] > surv[0]


def test_frontier_points_match_single_runs():
    prm, sched, xb = _deadly()
    fr = pareto_frontier([120.0], prm, xb, sched, **FAST)
    r = G.outer_sweep(prm.replace(xi=120.0), xb, sched, **FAST)
    assert fr.points[0].npv_output == pytest.approx(r.npv_output(), abs=1e-7)
    assert fr.points[0].survivors == pytest.approx(r.survivors(), abs=1e-7)


def test_frontier_records_failed_points():
    prm, sched, xb = _deadly()
    fr = pareto_frontier([0.0, 120.0], prm, xb, sched, max_iter=1, tol=1e-14)
    assert not fr.points and [s[0] for s in fr.skipped] == [0.0, 120.0]


def test_frontier_grid_errors():
    prm, sched, xb = _deadly()
    with pytest.raises(ParameterError):
        pareto_frontier([], prm, xb, sched)
    with pytest.raises(ParameterError):
        pareto_frontier([-1.0], prm, xb, sched)


def test_slope_is_survivors_per_percent_output():
    pts = [ParetoPoint(1.0, 2.0, 0.90, 0.0, True), ParetoPoint(10.0, 1.98, 0.91, 0.0, True)]
    fr = ParetoFrontier(pts, [])
    # one percent output drop buys 0.01 of the population
    assert fr.slope(1, 10, population=100.0) == pytest.approx(1.0)
    flat = ParetoFrontier([pts[0], ParetoPoint(10.0, 2.0, 0.91, 0.0, True)], [])
    assert flat.slope(1, 10) == float("inf")
    assert not ParetoFrontier(pts[::-1], []).is_monotone()


# --- small-horizon oracle --------------------------------------------------------------

def test_oracle_guards():
    prm = toy_params(4)
    sched = geometric_schedule(0.2, 4)
    with pytest.raises(HorizonError):
        small_horizon_oracle(prm, 0.05, sched)
    with pytest.raises(BudgetError):
        small_horizon_oracle(toy_params(3), 0.05, sched, lam_step=1e-3)
    with pytest.raises(ParameterError):
        small_horizon_oracle(toy_params(3), 0.05, sched, lam_step=0.0)


def test_one_period_oracle_matches_closed_form():
    prm, sched, _ = _deadly(T=2)
    for xi in (0.0, 20.0, 500.0):
        p = prm.replace(xi=xi)
        r = G.outer_sweep(p, 0.05, sched, tol=1e-12, inner_tol=1e-13, horizon=1)
        pc = G.lagrangian_pieces(r.trajectory, r.agent, r.gov_forward, r.gov_backward, r.chi, sched)
        lam = G.optimal_lambda(*G.lambda_coefficients(pc, 1), p.lambda_bar)
        o = small_horizon_oracle(p, 0.05, sched, lam_step=0.01, horizon=1)
        assert r.lam[0] == pytest.approx(lam, abs=1e-12)
        assert abs(o.lam[0] - lam) <= 0.01
        assert o.value <= r.objective + 1e-12
        assert o.evaluated == 71


def test_output_only_objective_keeps_economy_open():
    prm = toy_params(3, xi=0.0, phi_plus=0.0, phi_minus=0.0)
    o = small_horizon_oracle(prm, 0.05, geometric_schedule(0.2, 3))
    np.testing.assert_array_equal(o.lam, [1.0, 1.0, 1.0])
    assert o.evaluated == 15 ** 3


def test_sweep_is_no_worse_than_enumeration():
    prm, sched, xb = _deadly()
    o = small_horizon_oracle(prm, xb, sched)
    r = G.outer_sweep(prm, xb, sched, eps=0.2, tol=1e-10, inner_tol=1e-12, inner_eps=0.5)
    assert r.objective >= o.value - 1e-6
