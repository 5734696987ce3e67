"""Forward propagation of the disease state.

The single-step functions are plain numpy and serve as the readable
reference; :func:`simulate` runs the compiled kernel over a whole horizon.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .core import CompartmentGrid, PolicyPath, effective_R_series, output_series
from .errors import (CapacityError, ConsistencyError, DynamicsError, ShapeError,
                     StateError)
from .params import ModelParams
from .triangular import Triangular, flat_size

NEG_TOL = 1e-12


@dataclass(frozen=True)
class AggregateState:
    S: float
    I: float
    R: float
    IT: float = 0.0
    RT: float = 0.0
    H: float = 0.0
    D: float = 0.0

    def total(self) -> float:
        return self.S + self.I + self.R + self.IT + self.RT + self.H + self.D


@dataclass(frozen=True)
class BinState:
    """State at one date with the susceptible/infected/recovered split by bin."""

    S: np.ndarray
    I: np.ndarray
    R: np.ndarray
    IT: float = 0.0
    RT: float = 0.0
    H: float = 0.0
    D: float = 0.0

    def aggregate(self) -> AggregateState:
        return AggregateState(float(self.S.sum()), float(self.I.sum()), float(self.R.sum()),
                              self.IT, self.RT, self.H, self.D)


def _check(name, x):
    x = np.asarray(x, dtype=float)
    if np.any(x < -NEG_TOL) or np.any(x > 1.0 + NEG_TOL):
        raise DynamicsError(f"{name} left [0, 1]: {x!r}")
    return np.clip(x, 0.0, None) if np.ndim(x) else float(max(x, 0.0))


def _rates(params):
    ti, th = params.t_i, params.t_h
    return dict(ri=1.0 - 1.0 / ti, rh=1.0 - 1.0 / th, rho=(1.0 - params.m_i) / ti,
                mu=params.m_i / ti, theta=(1.0 - params.m_h) / th, dh=params.m_h / th)


def eligible_pool(S, I, R, alpha, lam, params) -> float:
    """Denominator of the testing constraint for one date."""
    bw, bs = params.betas
    S, I, R, alpha = (np.atleast_1d(np.asarray(v, dtype=float)) for v in (S, I, R, alpha))
    s, i, r = S.sum(), I.sum(), R.sum()
    ni = bw * lam * lam * s * i + bs * np.dot(alpha, S) * np.dot(alpha, I)
    g = params.gamma
    return g * (s - ni) + g * (r + (1.0 - params.m_i) / params.t_i * i) + (1.0 - 1.0 / params.t_i) * i + ni


def compute_testing_rate(state, lam: float, alpha, x_bar: float, params: ModelParams) -> float:
    """Testing rate that uses exactly ``x_bar`` tests on the eligible pool."""
    if x_bar < 0:
        raise StateError(f"negative test count {x_bar!r}")
    if x_bar == 0:
        return 0.0
    elig = eligible_pool(state.S, state.I, state.R, alpha, lam, params)
    if elig <= 0:
        raise StateError("eligible pool is empty")
    tau = x_bar / elig
    if tau >= 1.0:
        raise CapacityError(f"too many tests for the eligible pool (tau = {tau:.6g})")
    return float(tau)


def step_mechanical(state: AggregateState, lam: float, tau: float, params: ModelParams) -> AggregateState:
    """One period of the aggregate system with full social participation."""
    bw, bs = params.betas
    k = _rates(params)
    g = params.gamma
    S, I, R, IT, RT, H, D = state.S, state.I, state.R, state.IT, state.RT, state.H, state.D
    ni = bw * lam * lam * S * I + bs * S * I
    out = AggregateState(
        S=_check("S", S - ni),
        I=_check("I", (1.0 - tau) * (k["ri"] * I + ni)),
        R=_check("R", (1.0 - tau * g) * (R + k["rho"] * I)),
        IT=_check("IT", k["ri"] * IT + tau * (k["ri"] * I + ni)),
        RT=_check("RT", RT + k["rho"] * IT + k["theta"] * H + tau * g * (R + k["rho"] * I)),
        H=_check("H", k["rh"] * H + k["mu"] * (I + IT)),
        D=_check("D", D + k["dh"] * H),
    )
    return out


def step_behavioral(state: BinState, alpha, lam: float, tau: float, params: ModelParams) -> BinState:
    """One period with bin-specific social participation ``alpha``.

    The returned state has one more bin: the susceptibles revealed by
    testing this period.
    """
    S = np.asarray(state.S, dtype=float)
    I = np.asarray(state.I, dtype=float)
    R = np.asarray(state.R, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if not (S.shape == I.shape == R.shape == alpha.shape) or S.ndim != 1:
        raise ShapeError("bins of S, I, R and alpha must share one length")
    if np.any(alpha < 0) or np.any(alpha > 1):
        raise ShapeError("alpha must lie in [0, 1]")
    bw, bs = params.betas
    k = _rates(params)
    g = params.gamma
    s_tot, i_tot, r_tot = S.sum(), I.sum(), R.sum()
    ihat = np.dot(alpha, I)
    hazard = bw * lam * lam * i_tot + bs * alpha * ihat
    new_inf = S * hazard
    ni = new_inf.sum()
    keep = 1.0 - tau * g
    S_next = np.append(keep * (S - new_inf), tau * g * (s_tot - ni))
    I_next = np.append((1.0 - tau) * (k["ri"] * I + new_inf), 0.0)
    R_next = np.append(keep * (R + k["rho"] * I), 0.0)
    return BinState(
        S=_check("S", S_next), I=_check("I", I_next), R=_check("R", R_next),
        IT=_check("IT", k["ri"] * state.IT + tau * (k["ri"] * i_tot + ni)),
        RT=_check("RT", state.RT + k["rho"] * state.IT + k["theta"] * state.H + tau * g * (r_tot + k["rho"] * i_tot)),
        H=_check("H", k["rh"] * state.H + k["mu"] * (i_tot + state.IT)),
        D=_check("D", state.D + k["dh"] * state.H),
    )


@dataclass(frozen=True)
class Trajectory:
    """Forward run: state grid, controls, and per-date aggregates.

    ``Shat``/``Ihat`` are participation-weighted susceptible and infected
    masses for dates 1..T.
    """

    params: ModelParams
    grid: CompartmentGrid
    policy: PolicyPath
    S_tot: np.ndarray
    I_tot: np.ndarray
    R_tot: np.ndarray
    Shat: np.ndarray
    Ihat: np.ndarray

    @property
    def horizon(self) -> int:
        return int(self.policy.lam.size)

    @property
    def Y(self) -> np.ndarray:
        return output_series(self.grid, self.policy.lam)

    def effective_R(self) -> np.ndarray:
        return effective_R_series(self.grid, self.policy, self.params)


def as_path(x, T: int, name: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        x = np.full(T, float(x))
    if x.shape != (T,):
        raise ShapeError(f"{name} must have {T} entries, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} contains non-finite values")
    return np.ascontiguousarray(x)


def as_profile(alpha, T: int) -> Triangular:
    if isinstance(alpha, Triangular):
        if alpha.rows != T or alpha.extra != 0:
            raise ShapeError(f"alpha profile has {alpha.rows} rows, expected {T}")
        return alpha
    a = np.asarray(alpha, dtype=float)
    if a.ndim == 0:
        return Triangular.full(T, float(a))
    if a.size != flat_size(T):
        raise ShapeError(f"alpha buffer of size {a.size} does not match horizon {T}")
    return Triangular(a.copy(), T)


def simulate(params: ModelParams, lam, x_bar, alpha=1.0, horizon: int | None = None) -> Trajectory:
    """Run the behavioral system over dates 1..T and return the trajectory."""
    T = int(horizon if horizon is not None else params.horizon)
    lam = as_path(lam, T, "lambda")
    x_bar = as_path(x_bar, T, "x_bar")
    if np.any(x_bar < 0):
        raise StateError("test counts must be nonnegative")
    prof = as_profile(alpha, T)
    out = K.forward(params.packed(), lam, x_bar, prof.data, T)
    S, I, R, IT, RT, H, D, tau, Sagg, Iagg, Ragg, Shat, Ihat, status, bad = out
    if status == 1:
        raise CapacityError(f"too many tests for the eligible pool at t={bad} (tau = {tau[bad - 1]:.6g})")
    if status == 2:
        raise StateError(f"eligible pool empty at t={bad}")
    if status == 3 or status == 5:
        raise DynamicsError(f"a compartment left [0, 1] at t={bad}")
    if status == 4:
        raise ConsistencyError(f"mass balance drift above 1e-10 at t={bad}")
    grid = CompartmentGrid(Triangular(S, T + 1), Triangular(I, T + 1), Triangular(R, T + 1),
                           IT, RT, H, D)
    policy = PolicyPath(lam, x_bar, tau, prof)
    return Trajectory(params, grid, policy, Sagg, Iagg, Ragg, Shat, Ihat)


def simulate_forward(params: ModelParams, lam, x_bar, alpha=1.0, horizon: int | None = None):
    """Return ``(grid, tau)`` for the given controls and participation profile."""
    tr = simulate(params, lam, x_bar, alpha, horizon)
    return tr.grid, tr.policy.tau
