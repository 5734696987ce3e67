"""The representative agent: payoff, first-order condition, shadow values
and the damped best-response fixed point."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import AgentAdjoints, VaccineSchedule, distancing_series
from .dynamics import Trajectory, as_profile, simulate
from .errors import BoundaryError, ConvergenceError, HorizonError, NumericError, ParameterError
from .params import ModelParams
from .triangular import Triangular

# halve the damping after this many iterations without progress
STALL_WINDOW = 25
MIN_EPS = 1e-3


@dataclass(frozen=True)
class AgentObjectiveParts:
    y_a: float
    cost: float
    penalty: float

    @property
    def total(self) -> float:
        return self.y_a - self.cost + self.penalty


def schedule_arrays(schedule: VaccineSchedule, T: int):
    if schedule.horizon < T:
        raise HorizonError(f"schedule covers {schedule.horizon} dates, need {T}")
    p = np.ascontiguousarray(schedule.p[:T], dtype=float)
    q = 1.0 - np.cumsum(p)
    return p, q


def agent_objective(traj: Trajectory, schedule: VaccineSchedule,
                    include_penalty: bool = True) -> AgentObjectiveParts:
    """Expected output, cost and scaled log penalty with individual = aggregate."""
    prm = traj.params
    T = traj.horizon
    p, q = schedule_arrays(schedule, T)
    bw, bs = prm.betas
    c, dA = prm.c, prm.delta_a
    g = traj.grid
    lam = traj.policy.lam
    alpha = traj.policy.alpha
    disc = dA ** np.arange(T)            # dA^(t-1)
    disc1 = dA ** np.arange(1, T + 1)    # dA^t
    S, I, R = g.totals()
    S, I, R = S[:T], I[:T], R[:T]
    RT, IT, H = g.RT[:T], g.IT[:T], g.H[:T]
    D_now, D_next = g.D[:T], g.D[1:T + 1]
    y = lam * (S + I + R + RT)
    y_a = np.sum((1 - dA) * disc * y * q + disc1 * (1 - D_next) * p)

    sq = np.empty(T)
    pen = np.empty(T)
    for t in range(1, T + 1):
        a = alpha.row(t)
        mass = g.S.row(t) + g.I.row(t) + g.R.row(t)
        sq[t - 1] = np.dot((1 - a) ** 2, mass)
        if include_penalty:
            if np.any(a <= 0) or np.any(a >= 1):
                raise BoundaryError(f"alpha on the boundary at t={t}; log penalty is -inf")
            pen[t - 1] = np.sum(np.log(a) + np.log(1 - a))
    w = bw * lam * lam
    infect = prm.phi_plus * (w * S * I + bs * traj.Shat * traj.Ihat) \
        + prm.phi_minus * (w * S * I + bs * traj.Shat * traj.Ihat)
    cost = np.sum((1 - dA) * 0.5 * c * disc * ((IT + H + D_now) + sq) * q
                  + 0.5 * c * disc1 * D_next * p
                  + (1 - dA) * disc * infect * q)
    penalty = (1 - dA) * c * prm.kappa * np.sum(disc * pen * q) if include_penalty else 0.0
    return AgentObjectiveParts(float(y_a), float(cost), float(penalty))


def solve_social_distancing_foc(static_dynamic_rhs: float, bin_mass: float, kappa: float) -> float:
    """Participation share solving the agent's first-order condition for one bin."""
    if not np.isfinite(static_dynamic_rhs):
        raise NumericError(f"non-finite right side {static_dynamic_rhs!r}")
    if not bin_mass > 0:
        raise ParameterError(f"bin mass must be positive, got {bin_mass!r}")
    if not kappa > 0:
        raise ParameterError(f"kappa must be positive, got {kappa!r}")
    a, _, _ = K.foc_root(static_dynamic_rhs * bin_mass, bin_mass, kappa)
    return float(a)


def foc_residual(alpha: float, rhs: float, bin_mass: float, kappa: float) -> float:
    return 1 - alpha + kappa / bin_mass * (1 / alpha - 1 / (1 - alpha)) - rhs


def _agent_adjoint_arrays(traj: Trajectory, p, q):
    prm = traj.params
    T = traj.horizon
    pol = traj.policy
    return K.agent_backward(prm.packed(), p, q, pol.lam, pol.tau, pol.alpha.data,
                            traj.grid.S.data, traj.I_tot, traj.S_tot, traj.Shat, traj.Ihat, T)


def backward_agent_adjoints(traj: Trajectory, schedule: VaccineSchedule) -> AgentAdjoints:
    """Shadow values of the agent's own states, backward from the horizon."""
    T = traj.horizon
    p, q = schedule_arrays(schedule, T)
    SS, II, ITa, RR, RTa, Ha = _agent_adjoint_arrays(traj, p, q)
    return AgentAdjoints(Triangular(SS, T, 1), Triangular(II, T), ITa, Triangular(RR, T), RTa, Ha)


def infection_drop(adj: AgentAdjoints, tau: np.ndarray, gamma: float) -> Triangular:
    """Expected loss in continuation value when a bin-k susceptible is infected."""
    T = adj.I.rows
    rows = []
    for t in range(1, T + 1):
        tt = tau[t - 1]
        s = adj.S.row(t)
        rows.append((1 - tt * gamma) * s[:t] + tt * gamma * s[t] - (1 - tt) * adj.I.row(t) - tt * adj.IT[t - 1])
    return Triangular.from_rows(rows)


def best_response(traj: Trajectory, schedule: VaccineSchedule, adj: AgentAdjoints | None = None):
    """FOC solution for every (t, k) given the trajectory; returns (alpha, max residual)."""
    prm = traj.params
    if prm.c <= 0:
        raise ParameterError("the distancing first-order condition needs c > 0")
    T = traj.horizon
    p, q = schedule_arrays(schedule, T)
    if adj is None:
        adj = backward_agent_adjoints(traj, schedule)
    par = prm.packed()
    om = K.omega_weights(par, q, T)
    g = traj.grid
    a, worst = K.best_response(par, q, traj.policy.tau, g.S.data, g.I.data, g.R.data,
                               traj.Shat, traj.Ihat, adj.S.data, adj.I.data, adj.IT, om, T)
    return Triangular(a, T), worst


@dataclass
class InnerResult:
    alpha: Triangular
    trajectory: Trajectory
    adjoints: AgentAdjoints
    tau: np.ndarray
    iterations: int
    distance: float
    foc_residual: float
    history: list = field(default_factory=list)

    @property
    def distancing(self) -> np.ndarray:
        return distancing_series(self.trajectory.grid, self.alpha)


def inner_sweep(lam, x_bar, params: ModelParams, schedule: VaccineSchedule,
                tol: float = 1e-8, eps: float = 0.1, alpha0=None, max_iter: int = 10_000,
                horizon: int | None = None, record: bool = False) -> InnerResult:
    """Damped fixed point of the agent's best response to its own aggregate behavior.

    Undamped best responses overshoot and cycle on realistic calibrations;
    ``eps = 0.1`` contracts in most cases, and the step is halved whenever
    the distance stalls (a cycle) for ``STALL_WINDOW`` iterations.  The
    default start is half participation: starting from none at all lets
    the first iterate burn through the population and can exhaust the pool
    eligible for testing.
    """
    if not tol > 0:
        raise ParameterError("tol must be positive")
    if not 0 < eps <= 1:
        raise ParameterError("eps must lie in (0, 1]")
    T = int(horizon if horizon is not None else params.horizon)
    p, q = schedule_arrays(schedule, T)
    par = params.packed()
    if params.c <= 0:
        raise ParameterError("the distancing first-order condition needs c > 0")
    om = K.omega_weights(par, q, T)
    alpha = as_profile(0.5 if alpha0 is None else alpha0, T).data.copy()
    history = []
    dist = np.inf
    best, stall = np.inf, 0
    for it in range(1, max_iter + 1):
        traj = simulate(params, lam, x_bar, Triangular(alpha, T), horizon=T)
        g = traj.grid
        SS, II, ITa, RR, RTa, Ha = _agent_adjoint_arrays(traj, p, q)
        new, worst = K.best_response(par, q, traj.policy.tau, g.S.data, g.I.data, g.R.data,
                                     traj.Shat, traj.Ihat, SS, II, ITa, om, T)
        dist = float(np.max(np.abs(new - alpha)))
        if record:
            history.append((it, dist))
        if dist < tol:
            adj = AgentAdjoints(Triangular(SS, T, 1), Triangular(II, T), ITa, Triangular(RR, T), RTa, Ha)
            return InnerResult(Triangular(alpha, T), traj, adj, traj.policy.tau, it, dist, worst, history)
        if dist < best * (1 - 1e-3):
            best, stall = dist, 0
        else:
            stall += 1
            if stall >= STALL_WINDOW and eps > MIN_EPS:
                eps, best, stall = max(0.5 * eps, MIN_EPS), dist, 0
        alpha = (1 - eps) * alpha + eps * new
    raise ConvergenceError(f"inner sweep did not converge in {max_iter} iterations "
                           f"(last distance {dist:.3e})", dist, history)
