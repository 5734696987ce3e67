"""The government's problem: objective, dual systems, lockdown and
multiplier updates, and the damped outer fixed point.

Sign conventions of the Lagrangian
    L = J_G + sum Ups_bar . (state step - next state)
            + sum Pi_bar . (agent adjoint step - adjoint)
            + sum eta * Psi + sum chi * (tau * E - X_bar)
where Psi is the agent's first-order condition scaled to "benefit minus
cost of participating" per unit of flow utility, and E is the eligible pool.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .agent import InnerResult, inner_sweep, schedule_arrays
from .core import (AgentAdjoints, GovForward, VaccineSchedule, distancing_series,
                   effective_R_series)
from .dynamics import Trajectory, as_path, simulate
from .errors import ConditioningError, ConvergenceError, ParameterError, StateError
from .params import POPULATION, ModelParams
from .triangular import Triangular

COND_LIMIT = 1e12
RESIDUAL_LIMIT = 1e-10


def government_objective(traj: Trajectory, schedule: VaccineSchedule, xi: float | None = None) -> float:
    """Discounted expected output plus xi times expected survivors."""
    prm = traj.params
    xi = prm.xi if xi is None else xi
    T = traj.horizon
    p, q = schedule_arrays(schedule, T)
    dG = prm.delta_g
    disc = dG ** np.arange(T)
    alive_next = 1.0 - traj.grid.D[1:T + 1]
    return float(np.sum((1 - dG) * disc * traj.Y * q + dG * disc * alive_next * p)
                 + xi * np.sum(alive_next * p))


def npv_output(traj: Trajectory, schedule: VaccineSchedule) -> float:
    """Output part of the objective (the xi = 0 weighting)."""
    return government_objective(traj, schedule, xi=0.0)


def expected_survivors(traj: Trajectory, schedule: VaccineSchedule) -> float:
    T = traj.horizon
    p, _ = schedule_arrays(schedule, T)
    return float(np.sum((1.0 - traj.grid.D[1:T + 1]) * p))


def _omega(params, q, T):
    return K.omega_weights(params.packed(), q, T)


def dual_forward(traj: Trajectory, eta: Triangular, schedule: VaccineSchedule) -> GovForward:
    """Shadow prices on the agent's adjoint equations, started from zero."""
    T = traj.horizon
    _, q = schedule_arrays(schedule, T)
    pol = traj.policy
    om = _omega(traj.params, q, T)
    Sb, Ib, ITb, Rb, RTb, Hb = K.dual_forward(traj.params.packed(), pol.tau, pol.lam, pol.alpha.data,
                                              traj.grid.S.data, traj.I_tot, traj.Ihat, eta.data, om, T)
    return GovForward(Triangular(Sb, T), Triangular(Ib, T), ITb, Triangular(Rb, T), RTb, Hb)


def dual_backward(traj: Trajectory, agent: AgentAdjoints, fwd: GovForward, eta: Triangular,
                  chi: np.ndarray, schedule: VaccineSchedule) -> AgentAdjoints:
    """Government shadow values of the aggregate state, backward from the horizon."""
    T = traj.horizon
    p, q = schedule_arrays(schedule, T)
    pol = traj.policy
    g = traj.grid
    om = _omega(traj.params, q, T)
    out = K.gov_backward(traj.params.packed(), p, q, pol.lam, pol.tau, pol.alpha.data,
                         g.S.data, g.I.data, traj.S_tot, traj.I_tot, traj.Shat, traj.Ihat,
                         agent.S.data, agent.I.data, agent.IT, fwd.S.data, fwd.I.data, fwd.R.data,
                         eta.data, np.ascontiguousarray(chi, dtype=float), om, T)
    GS, GI, GIT, GR, GRT, GH = out
    return AgentAdjoints(Triangular(GS, T, 1), Triangular(GI, T), GIT, Triangular(GR, T), GRT, GH)


@dataclass(frozen=True)
class LagrangianPieces:
    """Date-t coefficients of the Lagrangian in (lambda_t, alpha_t, tau_t).

    The alpha block is diag(d) + I u^T + S v^T acting on eta with right side
    B0 + chi*B1; dL/dalpha = A eta - B.  dL/dtau = C0 + eta.g + chi*E and
    L = a*lam - b*lam^2 + (terms free of lam_t).
    """

    d: Triangular
    u: Triangular
    v: Triangular
    B0: Triangular
    B1: Triangular
    g: Triangular
    a: np.ndarray
    b: np.ndarray
    C0: np.ndarray
    E: np.ndarray


def lagrangian_pieces(traj: Trajectory, agent: AgentAdjoints, fwd: GovForward, gov: AgentAdjoints,
                      chi: np.ndarray, schedule: VaccineSchedule) -> LagrangianPieces:
    T = traj.horizon
    _, q = schedule_arrays(schedule, T)
    pol = traj.policy
    g = traj.grid
    om = _omega(traj.params, q, T)
    out = K.lagrangian_pieces(traj.params.packed(), q, pol.lam, pol.tau, pol.alpha.data,
                              g.S.data, g.I.data, g.R.data, traj.S_tot, traj.I_tot, traj.R_tot,
                              traj.Shat, traj.Ihat, np.ascontiguousarray(g.RT[:T]),
                              agent.S.data, agent.I.data, agent.IT, agent.R.data, agent.RT,
                              gov.S.data, gov.I.data, gov.IT, gov.R.data, gov.RT,
                              fwd.S.data, fwd.I.data, fwd.R.data, fwd.RT,
                              np.ascontiguousarray(chi, dtype=float), om, T)
    d, u, v, B0, B1, gk, a, b, C0, E = out
    tri = [Triangular(x, T) for x in (d, u, v, B0, B1, gk)]
    return LagrangianPieces(*tri, a, b, C0, E)


def lambda_coefficients(pieces: LagrangianPieces, t: int | None = None):
    """(a, b) with the lambda-part of the Lagrangian equal to a*lam - b*lam^2."""
    if t is None:
        return pieces.a.copy(), pieces.b.copy()
    return float(pieces.a[t - 1]), float(pieces.b[t - 1])


def optimal_lambda(a, b, lambda_bar: float):
    """Maximiser of a*lam - b*lam^2 on [lambda_bar, 1] (full opening when b <= 0)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        interior = np.clip(a / (2.0 * b), lambda_bar, 1.0)
    out = np.where(b <= 0, 1.0, interior)
    return float(out) if out.ndim == 0 else out


def _check_solution(worst_res, worst_cond, status):
    if worst_cond > COND_LIMIT:
        raise ConditioningError(f"alpha-stationarity system ill-conditioned (estimate {worst_cond:.3e})")
    if status == 2:
        raise StateError("testing-stationarity bracket is not positive")
    if worst_res > RESIDUAL_LIMIT:
        raise ConditioningError(f"alpha-stationarity residual {worst_res:.3e} above {RESIDUAL_LIMIT}")


def _solve(traj, pieces, eta, chi, mode):
    T = traj.horizon
    g = traj.grid
    eta_arr = np.zeros(pieces.d.data.size) if eta is None else np.ascontiguousarray(eta.data)
    chi_arr = np.zeros(T) if chi is None else np.ascontiguousarray(chi, dtype=float)
    out = K.solve_multipliers(g.S.data[:pieces.d.data.size], g.I.data[:pieces.d.data.size],
                              g.R.data[:pieces.d.data.size],
                              pieces.d.data, pieces.u.data, pieces.v.data, pieces.B0.data,
                              pieces.B1.data, pieces.g.data, pieces.C0, pieces.E,
                              traj.policy.tau, eta_arr, chi_arr, T, mode)
    eta_new, chi_new, res, cond, status = out
    return Triangular(eta_new, T), chi_new, res, cond, status


def solve_eta(t: int, traj: Trajectory, pieces: LagrangianPieces, chi) -> np.ndarray:
    """Bin multipliers at date t making the Lagrangian stationary in alpha_t."""
    chi_full = np.zeros(traj.horizon)
    chi_full[:] = np.asarray(chi, dtype=float) if np.ndim(chi) else float(chi)
    eta, _, res, cond, status = _solve(traj, pieces, None, chi_full, 1)
    _check_solution(res, cond, 0)
    return eta.row(t).copy()


def solve_chi(t: int, traj: Trajectory, pieces: LagrangianPieces, eta: Triangular) -> float:
    """Testing multiplier at date t making the Lagrangian stationary in tau_t."""
    _, chi, _, _, status = _solve(traj, pieces, eta, None, 2)
    if pieces.E[t - 1] <= 0:
        raise StateError(f"eligible pool not positive at t={t}")
    return float(chi[t - 1])


def solve_multipliers(traj: Trajectory, pieces: LagrangianPieces, check: bool = True):
    """Joint (eta, chi) solving both stationarity conditions at every date."""
    eta, chi, res, cond, status = _solve(traj, pieces, None, None, 0)
    if check:
        _check_solution(res, cond, status)
    return eta, chi, res, cond


@dataclass
class OptimalPolicyResult:
    params: ModelParams
    schedule: VaccineSchedule
    lam: np.ndarray
    eta: Triangular
    chi: np.ndarray
    trajectory: Trajectory
    agent: AgentAdjoints | None
    gov_forward: GovForward | None
    gov_backward: AgentAdjoints | None
    objective: float
    iterations: int
    distance: float
    converged: bool
    history: list = field(default_factory=list)

    @property
    def alpha(self) -> Triangular:
        return self.trajectory.policy.alpha

    @property
    def tau(self) -> np.ndarray:
        return self.trajectory.policy.tau

    def effective_R(self) -> np.ndarray:
        return effective_R_series(self.trajectory.grid, self.trajectory.policy, self.params)

    def distancing(self) -> np.ndarray:
        return distancing_series(self.trajectory.grid, self.alpha)

    def cumulative_deaths(self, population: float = POPULATION) -> float:
        return float(self.trajectory.grid.D[-1] * population)

    def npv_output(self) -> float:
        return npv_output(self.trajectory, self.schedule)

    def survivors(self) -> float:
        return expected_survivors(self.trajectory, self.schedule)


def outer_sweep(params: ModelParams, x_bar, schedule: VaccineSchedule, tol: float = 1e-6,
                eps: float | None = None, lam0=None, eta0=None, chi0=None, max_iter: int = 5000,
                inner_tol: float = 1e-8, inner_eps: float = 0.1, inner_max_iter: int = 10_000,
                fixed_alpha: float | None = None, horizon: int | None = None,
                raise_on_fail: bool = True, callback=None) -> OptimalPolicyResult:
    """Damped fixed point in (lambda, eta, chi) with the agent re-solved every pass.

    ``fixed_alpha`` pins social participation (no behavioral response); the
    alpha-stationarity block then drops out and eta stays zero.
    """
    T = int(horizon if horizon is not None else params.horizon)
    eps = params.epsilon if eps is None else eps
    if not 0 < eps <= 1:
        raise ParameterError("eps must lie in (0, 1]")
    x_bar = as_path(x_bar, T, "x_bar")
    lam = np.ones(T) if lam0 is None else as_path(lam0, T, "lambda").copy()
    lam = np.clip(lam, params.lambda_bar, 1.0)
    eta = Triangular.zeros(T) if eta0 is None else eta0.copy()
    chi = np.zeros(T) if chi0 is None else np.array(chi0, dtype=float)
    alpha = None
    history = []
    dist = np.inf
    state = None
    for it in range(1, max_iter + 1):
        if fixed_alpha is None:
            # loose agent solves while the policy is far from its fixed point
            itol = max(inner_tol, min(1e-4, 1e-2 * dist))
            inner = inner_sweep(lam, x_bar, params, schedule, tol=itol, eps=inner_eps,
                                alpha0=alpha, max_iter=inner_max_iter, horizon=T)
            traj, agent = inner.trajectory, inner.adjoints
            alpha = inner.alpha
        else:
            traj = simulate(params, lam, x_bar, fixed_alpha, horizon=T)
            agent = _zero_agent(T)
        fwd = dual_forward(traj, eta, schedule) if fixed_alpha is None else _zero_forward(T)
        gov = dual_backward(traj, agent, fwd, eta, chi, schedule)
        pieces = lagrangian_pieces(traj, agent, fwd, gov, chi, schedule)
        lam_new = optimal_lambda(pieces.a, pieces.b, params.lambda_bar)
        if fixed_alpha is None:
            eta_new, chi_new, _, _ = solve_multipliers(traj, pieces)
        else:
            _, chi_new, _, _, status = _solve(traj, pieces, Triangular.zeros(T), None, 2)
            eta_new = Triangular.zeros(T)
        dist = max(np.max(np.abs(lam_new - lam)), np.max(np.abs(eta_new.data - eta.data)),
                   np.max(np.abs(chi_new - chi)))
        obj = government_objective(traj, schedule)
        history.append((it, float(dist), obj))
        if callback is not None:
            callback(it, dist, obj)
        state = (traj, agent, fwd, gov, obj)
        if dist < tol:
            return OptimalPolicyResult(params, schedule, lam, eta, chi, traj,
                                       agent if fixed_alpha is None else None,
                                       fwd, gov, obj, it, float(dist), True, history)
        lam = (1 - eps) * lam + eps * lam_new
        eta = Triangular((1 - eps) * eta.data + eps * eta_new.data, T)
        chi = (1 - eps) * chi + eps * chi_new
    if raise_on_fail:
        raise ConvergenceError(f"outer sweep did not converge in {max_iter} iterations "
                               f"(last distance {dist:.3e})", dist, history)
    traj, agent, fwd, gov, obj = state
    return OptimalPolicyResult(params, schedule, lam, eta, chi, traj, agent, fwd, gov, obj,
                               max_iter, float(dist), False, history)


def _zero_agent(T):
    return AgentAdjoints(Triangular.zeros(T, 1), Triangular.zeros(T), np.zeros(T),
                         Triangular.zeros(T), np.zeros(T), np.zeros(T))


def _zero_forward(T):
    return GovForward(Triangular.zeros(T), Triangular.zeros(T), np.zeros(T),
                      Triangular.zeros(T), np.zeros(T), np.zeros(T))
