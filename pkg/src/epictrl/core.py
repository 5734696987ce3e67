"""Domain types, the vaccine-arrival schedule and accounting identities."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .errors import ConsistencyError, HorizonError, ParameterError, ShapeError, StateError
from .params import ModelParams
from .triangular import Triangular


@dataclass(frozen=True)
class VaccineSchedule:
    """Arrival mass ``p`` and survival ``q`` over dates 1..horizon (index 0 is t=1)."""

    p: np.ndarray
    q: np.ndarray
    r: int
    succ_prob: float

    @property
    def horizon(self) -> int:
        return int(self.p.size)

    def truncated(self, horizon: int) -> "VaccineSchedule":
        """Same law cut at an earlier horizon with the tail folded into q."""
        if horizon > self.horizon:
            raise HorizonError(f"cannot extend a schedule from {self.horizon} to {horizon}")
        p = self.p[:horizon].copy()
        return VaccineSchedule(p, 1.0 - np.cumsum(p), self.r, self.succ_prob)


def build_vaccine_schedule(mean: float = 540.0, variance: float = 180.0,
                           horizon: int = 600) -> VaccineSchedule:
    """Negative-binomial (trials until the r-th success) arrival law."""
    if not (mean > 0 and variance > 0):
        raise ParameterError(f"mean and variance must be positive, got {mean!r}, {variance!r}")
    succ = mean / (mean + variance)
    r = int(round(mean * mean / (mean + variance)))
    if r < 1:
        r = 1
    if horizon < r:
        raise HorizonError(f"horizon {horizon} ends before the first support point {r}")
    t = np.arange(1, horizon + 1)
    p = np.where(t >= r, stats.nbinom.pmf(t - r, r, succ), 0.0)
    q = 1.0 - np.cumsum(p)
    return VaccineSchedule(p, q, r, float(succ))


def schedule_from_arrival(p) -> VaccineSchedule:
    """Schedule from an explicit arrival mass (used for toy horizons)."""
    p = np.asarray(p, dtype=float)
    if np.any(p < 0) or p.sum() > 1 + 1e-12:
        raise ParameterError("arrival mass must be nonnegative with total at most 1")
    return VaccineSchedule(p, 1.0 - np.cumsum(p), 0, float("nan"))


def geometric_schedule(rate: float, horizon: int) -> VaccineSchedule:
    """Constant per-date arrival hazard; handy for short test horizons."""
    t = np.arange(1, horizon + 1)
    return schedule_from_arrival(rate * (1.0 - rate) ** (t - 1))


@dataclass(frozen=True)
class CompartmentGrid:
    """Aggregate state over dates 1..n (index 0 is t=1).

    ``S``, ``I`` and ``R`` are triangular (bin k <= t); the rest are scalars
    per date.  ``D`` follows its own recursion and is checked against the
    accounting identity during simulation.
    """

    S: Triangular
    I: Triangular
    R: Triangular
    IT: np.ndarray
    RT: np.ndarray
    H: np.ndarray
    D: np.ndarray

    @property
    def n_dates(self) -> int:
        return self.S.rows

    def totals(self):
        return self.S.row_sums(), self.I.row_sums(), self.R.row_sums()

    def mass(self) -> np.ndarray:
        s, i, r = self.totals()
        return s + i + r + self.IT + self.RT + self.H + self.D


@dataclass(frozen=True)
class PolicyPath:
    """Controls over dates 1..T plus the bin-level participation profile."""

    lam: np.ndarray
    x_bar: np.ndarray
    tau: np.ndarray
    alpha: Triangular


@dataclass(frozen=True)
class AgentAdjoints:
    """Shadow values of the agent's own states, dates 1..T."""

    S: Triangular   # k <= t+1
    I: Triangular
    IT: np.ndarray
    R: Triangular
    RT: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class GovForward:
    """Government duals on the agent adjoint equations, dates 1..T."""

    S: Triangular
    I: Triangular
    IT: np.ndarray
    R: Triangular
    RT: np.ndarray
    H: np.ndarray


@dataclass(frozen=True)
class AdjointSet:
    agent: AgentAdjoints
    gov_backward: Optional[AgentAdjoints] = None
    gov_forward: Optional[GovForward] = None
    eta: Optional[Triangular] = None
    chi: Optional[np.ndarray] = None


@dataclass(frozen=True)
class DerivedFlows:
    delta_agent: Triangular
    delta_gov: Optional[Triangular]
    hatS: np.ndarray
    hatI: np.ndarray
    hatR: np.ndarray
    Y: np.ndarray
    a_coeff: Optional[np.ndarray] = None
    b_coeff: Optional[np.ndarray] = None


def accounting_death(grid: CompartmentGrid, t: int) -> float:
    """One minus all living compartments at date ``t``."""
    if not 1 <= t <= grid.n_dates:
        raise ShapeError(f"date {t} outside 1..{grid.n_dates}")
    i = t - 1
    living = (grid.S.row(t).sum() + grid.I.row(t).sum() + grid.R.row(t).sum()
              + grid.IT[i] + grid.RT[i] + grid.H[i])
    d = 1.0 - living
    if not (-1e-10 <= d <= 1.0):
        raise ConsistencyError(f"accounting death {d!r} at t={t} outside [-1e-10, 1]")
    return float(d)


def effective_R(grid: CompartmentGrid, policy: PolicyPath, t: int, params: ModelParams) -> float:
    """Expected secondary cases caused by one unknown infected at date ``t``."""
    bw, bs = params.betas
    S = grid.S.row(t)
    I = grid.I.row(t)
    a = policy.alpha.row(t)
    I_tot = I.sum()
    if I_tot <= 0:
        raise StateError(f"no unknown infected at t={t}; effective R undefined")
    tau = policy.tau[t - 1]
    lam = policy.lam[t - 1]
    survive = (1.0 - tau) * (1.0 - 1.0 / params.t_i)
    per_case = bw * lam * lam * S.sum() + bs * np.dot(a, S) * np.dot(a, I) / I_tot
    return float((1.0 - tau) * per_case / (1.0 - survive))


def effective_R_series(grid: CompartmentGrid, policy: PolicyPath, params: ModelParams) -> np.ndarray:
    """Effective R for every control date; NaN where nobody is unknown-infected."""
    out = np.full(policy.lam.size, np.nan)
    for t in range(1, policy.lam.size + 1):
        if grid.I.row(t).sum() > 0:
            out[t - 1] = effective_R(grid, policy, t, params)
    return out


def distancing_series(grid: CompartmentGrid, alpha: Triangular) -> np.ndarray:
    """Population-weighted distancing share per date."""
    out = np.zeros(alpha.rows)
    for t in range(1, alpha.rows + 1):
        mass = grid.S.row(t) + grid.I.row(t) + grid.R.row(t)
        tot = mass.sum()
        out[t - 1] = np.dot(1.0 - alpha.row(t), mass) / tot if tot > 0 else 0.0
    return out


def output_series(grid: CompartmentGrid, lam: np.ndarray) -> np.ndarray:
    """Y_t = lambda_t times the working population (S+I+R+RT)."""
    s, i, r = grid.totals()
    n = lam.size
    return lam * (s[:n] + i[:n] + r[:n] + grid.RT[:n])
