"""Counterfactual scenarios, the output/survivor frontier, and a brute-force
policy oracle for tiny horizons."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .agent import inner_sweep
from .core import VaccineSchedule, build_vaccine_schedule, distancing_series, effective_R_series
from .dynamics import Trajectory, as_path
from .errors import BudgetError, EpictrlError, HorizonError, ParameterError
from .government import (OptimalPolicyResult, expected_survivors, government_objective,
                         npv_output, outer_sweep)
from .params import POPULATION, ModelParams

SCENARIOS = ("baseline", "no_lockdown", "no_social_distancing", "high_testing",
             "efficient_testing", "high_and_efficient", "eta_split", "myopic")
HIGH_TESTING_COUNT = 1e6
DEFAULT_XI_GRID = tuple(float(x) for x in range(31))
ORACLE_BUDGET = 200_000


@dataclass(frozen=True)
class Scenario:
    kind: str = "baseline"
    eta: float | None = None
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SCENARIOS:
            raise ParameterError(f"unknown scenario {self.kind!r}; choose from {', '.join(SCENARIOS)}")
        if self.kind == "eta_split":
            if self.eta is None or not 0 <= self.eta <= 1:
                raise ParameterError("eta_split needs eta in [0, 1]")
        elif self.eta is not None:
            raise ParameterError("eta is only meaningful for eta_split")
        bad = set(self.overrides) - set(ModelParams.__dataclass_fields__)
        if bad:
            raise ParameterError(f"overrides touch unknown fields: {sorted(bad)}")

    @property
    def label(self) -> str:
        return f"eta_split_{self.eta:g}" if self.kind == "eta_split" else self.kind


def apply_scenario(scenario: Scenario, params: ModelParams, x_bar, population: float = POPULATION):
    """Patched ``(params, x_bar)`` for a scenario."""
    T = params.horizon
    x_bar = as_path(x_bar, T, "x_bar").copy()
    kind = scenario.kind
    upd = dict(scenario.overrides)
    if kind in ("high_testing", "high_and_efficient"):
        x_bar = np.full(T, HIGH_TESTING_COUNT / population)
    if kind in ("efficient_testing", "high_and_efficient"):
        upd["gamma"] = params.gamma / 2
    if kind == "eta_split":
        upd["eta_split"] = scenario.eta
    if kind == "myopic":
        upd["delta_a"] = 0.0
    return (params.replace(**upd) if upd else params), x_bar


@dataclass
class ScenarioResult:
    label: str
    params: ModelParams
    schedule: VaccineSchedule
    trajectory: Trajectory
    objective: float
    converged: bool
    iterations: int
    policy: OptimalPolicyResult | None = None

    @property
    def lam(self) -> np.ndarray:
        return self.trajectory.policy.lam

    @property
    def tau(self) -> np.ndarray:
        return self.trajectory.policy.tau

    def distancing(self) -> np.ndarray:
        return distancing_series(self.trajectory.grid, self.trajectory.policy.alpha)

    def effective_R(self) -> np.ndarray:
        return effective_R_series(self.trajectory.grid, self.trajectory.policy, self.params)

    def cumulative_deaths(self, population: float = POPULATION) -> np.ndarray:
        """Deaths by date 1..T+1, head-count."""
        return self.trajectory.grid.D * population

    def npv_output(self) -> float:
        return npv_output(self.trajectory, self.schedule)

    def survivors(self) -> float:
        return expected_survivors(self.trajectory, self.schedule)


def run_scenario(scenario: Scenario, params: ModelParams, x_bar, schedule: VaccineSchedule | None = None,
                 population: float = POPULATION, **sweep) -> ScenarioResult:
    """Patch the inputs, run the matching sweep, and bundle the outcome.

    ``no_lockdown`` keeps the economy fully open and only solves the
    agent; ``no_social_distancing`` pins participation at one and lets the
    government optimize; every other kind runs the full nested sweep.
    Extra keyword arguments go to :func:`outer_sweep`.
    """
    prm, xb = apply_scenario(scenario, params, x_bar, population)
    T = prm.horizon
    schedule = schedule if schedule is not None else build_vaccine_schedule(horizon=T)
    if scenario.kind == "no_lockdown":
        keys = ("tol", "eps", "max_iter")
        inner = {k: sweep[f"inner_{k}"] for k in keys if f"inner_{k}" in sweep}
        res = inner_sweep(np.ones(T), xb, prm, schedule, horizon=T, **inner)
        obj = government_objective(res.trajectory, schedule)
        return ScenarioResult(scenario.label, prm, schedule, res.trajectory, obj, True, res.iterations)
    if scenario.kind == "no_social_distancing":
        sweep = dict(sweep, fixed_alpha=1.0)
    opt = outer_sweep(prm, xb, schedule, **sweep)
    return ScenarioResult(scenario.label, prm, schedule, opt.trajectory, opt.objective,
                          opt.converged, opt.iterations, opt)


@dataclass(frozen=True)
class ParetoPoint:
    xi: float
    npv_output: float
    survivors: float
    deaths: float
    converged: bool


@dataclass
class ParetoFrontier:
    points: list
    skipped: list

    def arrays(self):
        xi = np.array([p.xi for p in self.points])
        out = np.array([p.npv_output for p in self.points])
        surv = np.array([p.survivors for p in self.points])
        return xi, out, surv

    def is_monotone(self, tol: float = 1e-9) -> bool:
        _, out, surv = self.arrays()
        return bool(np.all(np.diff(surv) >= -tol) and np.all(np.diff(out) <= tol))

    def slope(self, xi_lo: float, xi_hi: float, population: float = POPULATION) -> float:
        """Extra survivors (head-count) per one percent of output given up between two grid points."""
        xi, out, surv = self.arrays()
        i = int(np.flatnonzero(np.isclose(xi, xi_lo))[0])
        j = int(np.flatnonzero(np.isclose(xi, xi_hi))[0])
        drop = 100.0 * (out[i] - out[j]) / out[i]
        if drop <= 0:
            return float("inf")
        return float((surv[j] - surv[i]) * population / drop)


def pareto_frontier(xi_grid, params: ModelParams, x_bar, schedule: VaccineSchedule | None = None,
                    population: float = POPULATION, callback=None, **sweep) -> ParetoFrontier:
    """One optimal policy per Pareto weight, warm-starting each from its neighbour."""
    grid = sorted(float(x) for x in xi_grid)
    if not grid:
        raise ParameterError("xi grid is empty")
    if any(x < 0 for x in grid):
        raise ParameterError("Pareto weights must be nonnegative")
    T = params.horizon
    schedule = schedule if schedule is not None else build_vaccine_schedule(horizon=T)
    points, skipped = [], []
    warm = {}
    for xi in grid:
        prm = params.replace(xi=xi)
        try:
            opt = outer_sweep(prm, x_bar, schedule, **{**sweep, **warm})
        except EpictrlError as exc:
            skipped.append((xi, str(exc)))
            continue
        warm = dict(lam0=opt.lam, eta0=opt.eta, chi0=opt.chi)
        pt = ParetoPoint(xi, opt.npv_output(), opt.survivors(), opt.cumulative_deaths(population),
                         opt.converged)
        points.append(pt)
        if callback is not None:
            callback(pt)
    return ParetoFrontier(points, skipped)


@dataclass(frozen=True)
class OracleResult:
    lam: np.ndarray
    value: float
    evaluated: int


def small_horizon_oracle(params: ModelParams, x_bar, schedule: VaccineSchedule, lam_step: float = 0.05,
                         budget: int = ORACLE_BUDGET, inner_tol: float = 1e-12,
                         inner_eps: float = 0.5, horizon: int | None = None) -> OracleResult:
    """Best lockdown path over a grid on ``[lambda_bar, 1]`` by enumeration.

    Every candidate path is scored with the agent's equilibrium response.
    Short horizons tolerate much lighter damping than the full model, hence
    the larger default ``inner_eps``. ``horizon`` overrides ``params.horizon``.
    """
    T = int(horizon if horizon is not None else params.horizon)
    if T > 3:
        raise HorizonError(f"enumeration is limited to horizons of at most 3, got {T}")
    if not 0 < lam_step <= 1:
        raise ParameterError("lam_step must lie in (0, 1]")
    lb = params.lambda_bar
    n = int(np.floor((1.0 - lb) / lam_step + 1e-9)) + 1
    levels = np.unique(np.append(lb + lam_step * np.arange(n), 1.0))
    levels = levels[levels <= 1.0]
    count = levels.size ** T
    if count > budget:
        raise BudgetError(f"{count} candidate paths exceed the budget of {budget}")
    best_val, best_lam = -np.inf, None
    alpha = None
    for path in itertools.product(levels, repeat=T):
        lam = np.array(path)
        res = inner_sweep(lam, x_bar, params, schedule, tol=inner_tol, eps=inner_eps, alpha0=alpha, horizon=T)
        alpha = res.alpha
        val = government_objective(res.trajectory, schedule)
        if val > best_val:
            best_val, best_lam = val, lam
    return OracleResult(best_lam, float(best_val), count)
