"""Data handling, the historical policy approximation, and the fit of the
behavioral parameters to death and positive-test flows."""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy.optimize import minimize

from .agent import inner_sweep
from .core import VaccineSchedule, build_vaccine_schedule
from .dynamics import Trajectory, as_path
from .errors import CalibrationError, DataError, EpictrlError, ParameterError, ShapeError
from .params import POPULATION, ModelParams

START_DATE = dt.date(2020, 2, 29)
IN_SAMPLE_DAYS = 352
PENALTY_LOSS = 1e30
FREE_PARAMETERS = ("beta", "gamma", "c", "phi_plus")
DEFAULT_BOUNDS = {"beta": (0.05, 0.6), "gamma": (0.005, 1.0), "c": (0.05, 3.0), "phi_plus": (10.0, 3000.0)}


def date_of(t: int) -> dt.date:
    """Calendar date of model day ``t`` (day 1 is 2020-02-29)."""
    return START_DATE + dt.timedelta(days=int(t) - 1)


def day_of(date) -> int:
    if isinstance(date, str):
        date = dt.date.fromisoformat(date)
    return (date - START_DATE).days + 1


@dataclass(frozen=True)
class ObservedSeries:
    """Daily head-count series indexed by model day 1, 2, ...."""

    deaths_flow: np.ndarray
    positives_flow: np.ndarray
    hospitalized: np.ndarray
    tests: np.ndarray
    start_day: int = 1
    smoothed: bool = False

    def __post_init__(self):
        arrs = [np.asarray(getattr(self, f), dtype=float) for f in
                ("deaths_flow", "positives_flow", "hospitalized", "tests")]
        n = arrs[0].size
        if any(a.ndim != 1 or a.size != n for a in arrs):
            raise ShapeError("observed series must be one-dimensional and of equal length")
        for name, a in zip(("deaths_flow", "positives_flow", "hospitalized", "tests"), arrs):
            if not np.all(np.isfinite(a)) or np.any(a < 0):
                raise DataError(f"{name} must be finite and nonnegative")
            object.__setattr__(self, name, a)

    def __len__(self) -> int:
        return int(self.deaths_flow.size)

    @property
    def days(self) -> np.ndarray:
        return np.arange(self.start_day, self.start_day + len(self))

    @property
    def dates(self) -> list:
        return [date_of(t) for t in self.days]

    def window(self, n_days: int) -> "ObservedSeries":
        if self.start_day != 1 or len(self) < n_days:
            raise DataError(f"need data for days 1..{n_days}, have {self.start_day}..{self.start_day + len(self) - 1}")
        return ObservedSeries(self.deaths_flow[:n_days], self.positives_flow[:n_days],
                              self.hospitalized[:n_days], self.tests[:n_days], 1, self.smoothed)

    def smooth(self) -> "ObservedSeries":
        if self.smoothed:
            return self
        return ObservedSeries(smooth_7day(self.deaths_flow), smooth_7day(self.positives_flow),
                              smooth_7day(self.hospitalized), smooth_7day(self.tests),
                              self.start_day, True)

    @classmethod
    def from_csv(cls, path) -> "ObservedSeries":
        """Read ``date,deaths,positives,hospitalized,tests`` rows; dates must be consecutive."""
        path = Path(path)
        try:
            with path.open(newline="") as fh:
                rows = list(csv.DictReader(fh))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc}") from exc
        need = {"date", "deaths", "positives", "hospitalized", "tests"}
        if not rows or not need <= set(rows[0]):
            raise DataError(f"{path} must have columns {sorted(need)}")
        try:
            days = [day_of(r["date"].strip()) for r in rows]
            cols = {k: np.array([float(r[k] or 0.0) for r in rows]) for k in need - {"date"}}
        except ValueError as exc:
            raise DataError(f"{path}: {exc}") from exc
        if np.any(np.diff(days) != 1):
            raise DataError(f"{path}: dates must be consecutive days")
        return cls(cols["deaths"], cols["positives"], cols["hospitalized"], cols["tests"], days[0])

    def to_csv(self, path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["date", "deaths", "positives", "hospitalized", "tests"])
            for t, d, p, h, x in zip(self.days, self.deaths_flow, self.positives_flow,
                                     self.hospitalized, self.tests):
                w.writerow([date_of(t).isoformat(), repr(float(d)), repr(float(p)),
                            repr(float(h)), repr(float(x))])


def smooth_7day(series) -> np.ndarray:
    """Centered seven-day mean; the window shrinks near both ends."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 7:
        raise DataError("smoothing needs a one-dimensional series of length >= 7")
    c = np.concatenate(([0.0], np.cumsum(x)))
    i = np.arange(x.size)
    lo = np.maximum(i - 3, 0)
    hi = np.minimum(i + 4, x.size)
    return (c[hi] - c[lo]) / (hi - lo)


@dataclass(frozen=True)
class LockdownShape:
    sigma1: float = 2.0
    sigma2: float = 0.9995
    breaks: tuple = (16, 32, 103)

    def __post_init__(self):
        if not 0 < self.sigma2 < 1:
            raise ParameterError("sigma2 must lie in (0, 1)")
        if not self.sigma1 > 0:
            raise ParameterError("sigma1 must be positive")
        b = self.breaks
        if len(b) != 3 or not (0 < b[0] < b[1] < b[2]):
            raise ParameterError("breaks must be three increasing positive days")


def lockdown_path(t, lambda_bar: float = 0.3, shape: LockdownShape = LockdownShape()):
    """Approximate historical activity share on day(s) ``t``.

    Open until the first break, a steep decline to ``lambda_bar`` by the
    second, flat until the third, then a slow geometric return toward 1.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    if np.any(t < 1):
        raise ParameterError("days start at 1")
    b1, b2, b3 = shape.breaks
    lb2 = lambda_bar * lambda_bar
    out = np.ones_like(t)
    ph2 = (t > b1) & (t <= b2)
    frac = (t[ph2] - b1) / (b2 - b1 + 1)
    out[ph2] = np.sqrt(1.0 - (1.0 - lb2) * frac ** shape.sigma1)
    out[(t > b2) & (t <= b3)] = lambda_bar
    ph4 = t > b3
    s = shape.sigma2 ** (t[ph4] - b3 - 1)
    out[ph4] = np.sqrt(lb2 * s + 1.0 - s)
    return float(out[0]) if scalar else out


def extrapolate_tests(series, horizon: int) -> np.ndarray:
    """Keep the observed values and continue them with a least-squares quadratic in time."""
    x = np.asarray(series, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise DataError("need at least three in-sample test counts")
    if horizon < x.size:
        return x[:horizon].copy()
    t = np.arange(1, x.size + 1, dtype=float)
    fit = Polynomial.fit(t, x, 2)
    out = np.empty(horizon)
    out[:x.size] = x
    out[x.size:] = np.maximum(fit(np.arange(x.size + 1, horizon + 1, dtype=float)), 0.0)
    return out


def quadratic_coefficients(series) -> np.ndarray:
    """Coefficients (c0, c1, c2) of the in-sample fit on unscaled days."""
    x = np.asarray(series, dtype=float)
    t = np.arange(1, x.size + 1, dtype=float)
    return Polynomial.fit(t, x, 2).convert().coef


# Approximate daily count of people tested: roughly 2k at the start,
# 150k by late April 2020 and 700k by mid-February 2021.
_TEST_ANCHORS = ((1, 2.0e3), (60, 1.5e5), (IN_SAMPLE_DAYS, 7.0e5))


def approximate_tests(horizon: int, population: float = POPULATION) -> np.ndarray:
    """Stand-in per-capita test path used when no test data is supplied."""
    t, x = np.array(_TEST_ANCHORS).T
    poly = Polynomial.fit(t, x, 2)
    days = np.arange(1, horizon + 1, dtype=float)
    return np.maximum(poly(days), 0.0) / population


def positive_flow(traj: Trajectory, population: float = POPULATION) -> np.ndarray:
    """Daily new known infections plus new hospitalizations, head-count."""
    prm = traj.params
    bw, bs = prm.betas
    T = traj.horizon
    g = traj.grid
    lam, tau = traj.policy.lam, traj.policy.tau
    S, I = traj.S_tot[:T], traj.I_tot[:T]
    ni = bw * lam * lam * S * I + bs * traj.Shat * traj.Ihat
    new_it = tau * ((1.0 - 1.0 / prm.t_i) * I + ni)
    new_h = prm.m_i / prm.t_i * (I + g.IT[:T])
    return (new_it + new_h) * population


def death_flow(traj: Trajectory, population: float = POPULATION) -> np.ndarray:
    D = traj.grid.D
    return np.diff(D) * population


def estimate_mh(hospitalized, deaths_flow, t_h: int = 7) -> float:
    """Through-origin OLS slope of daily deaths on hospital stock, times ``t_h``."""
    h = np.asarray(hospitalized, dtype=float)
    d = np.asarray(deaths_flow, dtype=float)
    if h.shape != d.shape:
        raise ShapeError("hospitalized and deaths series must align")
    ok = np.isfinite(h) & np.isfinite(d)
    h, d = h[ok], d[ok]
    den = np.dot(h, h)
    if den <= 0:
        raise DataError("hospitalization regressor is identically zero")
    return float(np.dot(h, d) / den * t_h)


def auto_omega(data: ObservedSeries) -> float:
    """Weight that makes both squared-error sums equally heavy at the data."""
    d2 = float(np.sum(data.deaths_flow ** 2))
    p2 = float(np.sum(data.positives_flow ** 2))
    if d2 + p2 <= 0:
        raise DataError("observed deaths and positives are all zero")
    return p2 / (d2 + p2)


@dataclass(frozen=True)
class CalibrationConfig:
    omega: float | str = "auto"
    equal_betas: bool = True
    altruism_ratio: float | None = 0.1
    bounds: dict = field(default_factory=lambda: dict(DEFAULT_BOUNDS))
    starts: int = 20
    seed: int = 0
    n_days: int = IN_SAMPLE_DAYS
    max_evals: int = 400
    xatol: float = 1e-4
    fatol: float = 1e-6

    def __post_init__(self):
        if self.omega != "auto" and not (0 < float(self.omega) < 1):
            raise ParameterError("omega must be 'auto' or lie in (0, 1)")
        if self.starts < 1:
            raise ParameterError("starts must be >= 1")
        for name in FREE_PARAMETERS:
            if name not in self.bounds:
                raise ParameterError(f"missing bounds for {name}")
            lo, hi = self.bounds[name]
            if not (np.isfinite(lo) and np.isfinite(hi) and lo <= hi):
                raise ParameterError(f"bounds for {name} must be finite with lo <= hi")

    def bounds_array(self) -> np.ndarray:
        return np.array([self.bounds[n] for n in FREE_PARAMETERS], dtype=float)

    def resolve_omega(self, data: ObservedSeries) -> float:
        return auto_omega(data) if self.omega == "auto" else float(self.omega)


def apply_theta(theta, base: ModelParams, config: CalibrationConfig = CalibrationConfig()) -> ModelParams:
    beta, gamma, c, phip = (float(v) for v in theta)
    upd = dict(beta_w=beta, beta_s=beta, gamma=gamma, c=c, phi_plus=phip)
    if not config.equal_betas:
        upd.pop("beta_w")
    if config.altruism_ratio is not None:
        upd["phi_minus"] = phip * config.altruism_ratio
    return base.replace(**upd)


def theta_of(params: ModelParams) -> np.ndarray:
    return np.array([params.beta_s, params.gamma, params.c, params.phi_plus])


@dataclass
class LossEvaluator:
    """Loss as a function of the free parameters, reusing the last equilibrium as a warm start."""

    data: ObservedSeries
    base: ModelParams
    lam: np.ndarray
    x_bar: np.ndarray
    schedule: VaccineSchedule
    omega: float
    config: CalibrationConfig = field(default_factory=CalibrationConfig)
    population: float = POPULATION
    inner_tol: float = 1e-8
    evaluations: int = 0
    failures: int = 0
    _alpha: object = None

    def simulate(self, theta):
        prm = apply_theta(theta, self.base, self.config)
        res = inner_sweep(self.lam, self.x_bar, prm, self.schedule, tol=self.inner_tol,
                          alpha0=self._alpha, horizon=self.lam.size)
        self._alpha = res.alpha
        return res

    def __call__(self, theta) -> float:
        value, _ = self.evaluate(theta)
        return value

    def evaluate(self, theta):
        """Return ``(loss, ok)``; failed equilibria get a large finite loss."""
        self.evaluations += 1
        try:
            res = self.simulate(theta)
        except EpictrlError:
            self.failures += 1
            self._alpha = None
            return PENALTY_LOSS, False
        return fit_loss(res.trajectory, self.data, self.omega, self.config.n_days, self.population), True


def fit_loss(traj: Trajectory, data: ObservedSeries, omega: float, n_days: int = IN_SAMPLE_DAYS,
             population: float = POPULATION) -> float:
    if traj.horizon < n_days:
        raise ShapeError(f"trajectory covers {traj.horizon} days, loss needs {n_days}")
    obs = data.window(n_days)
    dd = death_flow(traj, population)[:n_days] - obs.deaths_flow
    dp = positive_flow(traj, population)[:n_days] - obs.positives_flow
    return float(omega * np.dot(dd, dd) + (1.0 - omega) * np.dot(dp, dp))


def loss(theta, data: ObservedSeries, omega, base: ModelParams, lam, x_bar,
         schedule: VaccineSchedule | None = None, config: CalibrationConfig = CalibrationConfig(),
         population: float = POPULATION) -> float:
    T = base.horizon
    schedule = schedule if schedule is not None else build_vaccine_schedule(horizon=T)
    lam = as_path(lam, T, "lambda")
    x_bar = as_path(x_bar, T, "x_bar")
    om = config.resolve_omega(data) if omega is None or omega == "auto" else float(omega)
    return LossEvaluator(data, base, lam, x_bar, schedule, om, config, population)(theta)


@dataclass
class StartResult:
    x0: np.ndarray
    theta: np.ndarray
    loss: float
    evaluations: int
    converged: bool
    message: str


@dataclass
class CalibrationResult:
    theta: np.ndarray
    loss: float
    params: ModelParams
    omega: float
    starts: list

    def as_dict(self) -> dict:
        return dict(zip(FREE_PARAMETERS, map(float, self.theta)))


def calibrate(data: ObservedSeries, config: CalibrationConfig = CalibrationConfig(),
              base: ModelParams = ModelParams(), lam=None, x_bar=None,
              schedule: VaccineSchedule | None = None, population: float = POPULATION,
              x0=None, callback=None) -> CalibrationResult:
    """Multi-start bounded simplex search over (beta, gamma, c, phi_plus).

    Starts are drawn uniformly in log-space inside the bounds from
    ``config.seed``; ``x0``, when given, replaces the first draw.
    """
    T = base.horizon
    if lam is None:
        lam = lockdown_path(np.arange(1, T + 1), base.lambda_bar)
    if x_bar is None:
        x_bar = extrapolate_tests(data.smooth().tests, T) / population
    lam = as_path(lam, T, "lambda")
    x_bar = as_path(x_bar, T, "x_bar")
    schedule = schedule if schedule is not None else build_vaccine_schedule(horizon=T)
    data = data.smooth().window(config.n_days)
    omega = config.resolve_omega(data)
    bnds = config.bounds_array()
    lo, hi = bnds[:, 0], bnds[:, 1]
    rng = np.random.default_rng(config.seed)
    draws = np.exp(rng.uniform(np.log(lo), np.log(hi), size=(config.starts, lo.size)))
    if x0 is not None:
        draws[0] = np.clip(np.asarray(x0, dtype=float), lo, hi)

    # the search runs on theta / scale so all coordinates are O(1)
    scale = np.sqrt(lo * hi)
    results = []
    for i, start in enumerate(draws):
        ev = LossEvaluator(data, base, lam, x_bar, schedule, omega, config, population)
        if np.all(lo == hi):
            val, ok = ev.evaluate(lo)
            results.append(StartResult(start, lo.copy(), val, ev.evaluations, ok, "degenerate bounds"))
            continue
        res = minimize(lambda z: ev(z * scale), start / scale, method="Nelder-Mead",
                       bounds=list(zip(lo / scale, hi / scale)),
                       options=dict(maxfev=config.max_evals, xatol=config.xatol, fatol=config.fatol))
        theta = np.clip(res.x * scale, lo, hi)
        val = float(res.fun)
        results.append(StartResult(start, theta, val, ev.evaluations, bool(res.success) and val < PENALTY_LOSS,
                                   str(res.message)))
        if callback is not None:
            callback(i, results[-1])
    good = [r for r in results if r.loss < PENALTY_LOSS]
    if not good:
        raise CalibrationError("every start failed to produce an equilibrium", results)
    best = min(good, key=lambda r: r.loss)
    return CalibrationResult(best.theta, best.loss, apply_theta(best.theta, base, config), omega, results)


def synthetic_observations(params: ModelParams, lam=None, x_bar=None, schedule=None,
                           n_days: int = IN_SAMPLE_DAYS, population: float = POPULATION,
                           noise: float = 0.0, seed: int = 0) -> ObservedSeries:
    """Observations generated by the model itself (optionally with multiplicative noise)."""
    T = params.horizon
    lam = lockdown_path(np.arange(1, T + 1), params.lambda_bar) if lam is None else as_path(lam, T, "lambda")
    x_bar = approximate_tests(T, population) if x_bar is None else as_path(x_bar, T, "x_bar")
    schedule = schedule if schedule is not None else build_vaccine_schedule(horizon=T)
    res = inner_sweep(lam, x_bar, params, schedule, horizon=T)
    tr = res.trajectory
    cols = [death_flow(tr, population)[:n_days], positive_flow(tr, population)[:n_days],
            tr.grid.H[:n_days] * population, x_bar[:n_days] * population]
    if noise > 0:
        rng = np.random.default_rng(seed)
        cols[:2] = [c * np.exp(rng.normal(0.0, noise, c.size)) for c in cols[:2]]
    return ObservedSeries(*cols, start_day=1, smoothed=True)
