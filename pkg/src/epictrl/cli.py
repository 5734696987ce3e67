"""Command-line entry point: ``epictrl <subcommand> [options]``.

Exit codes: 0 success, 2 non-convergence, 64 usage or configuration
error, 74 input/output error, 1 any other model failure.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import io, svg
from .agent import inner_sweep
from .calibration import (CalibrationConfig, ObservedSeries, approximate_tests, death_flow,
                          date_of, day_of, extrapolate_tests, lockdown_path, positive_flow,
                          quadratic_coefficients)
from .core import build_vaccine_schedule
from .errors import ConvergenceError, DataError, EpictrlError, ParameterError
from .experiments import SCENARIOS, Scenario, ParetoFrontier, pareto_frontier, run_scenario
from .government import outer_sweep
from .params import POPULATION, ModelParams

EXIT_OK, EXIT_FAIL, EXIT_NONCONV, EXIT_USAGE, EXIT_IO = 0, 1, 2, 64, 74

RUN_DEFAULTS = dict(inner_tol=1e-8, inner_eps=0.1, inner_max_iter=10_000, outer_tol=1e-6,
                    outer_max_iter=5000, vaccine_mean=540.0, vaccine_variance=180.0,
                    population=POPULATION)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def load_config(path=None):
    """``(ModelParams, run settings)`` from an INI file with [model] and [run] sections."""
    fields = ModelParams.__dataclass_fields__
    model, run = {}, dict(RUN_DEFAULTS)
    if path is not None:
        cp = configparser.ConfigParser()
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise DataError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise ParameterError(f"malformed config {path}: {exc}") from exc
        unknown = set(cp.sections()) - {"model", "run"}
        if unknown:
            raise ParameterError(f"unknown config sections: {sorted(unknown)}")
        for key, raw in (cp["model"].items() if cp.has_section("model") else []):
            if key not in fields:
                raise ParameterError(f"unknown model parameter {key!r}")
            model[key] = _parse_value(key, raw)
        for key, raw in (cp["run"].items() if cp.has_section("run") else []):
            if key not in RUN_DEFAULTS:
                raise ParameterError(f"unknown run setting {key!r}")
            run[key] = type(RUN_DEFAULTS[key])(float(raw))
    return ModelParams(**model), run


def _parse_value(key, raw):
    raw = raw.strip()
    if raw.lower() in ("none", ""):
        return None
    try:
        v = float(raw)
    except ValueError as exc:
        raise ParameterError(f"{key} must be numeric, got {raw!r}") from exc
    return int(v) if key in ("t_i", "t_h", "horizon") else v


def _workers() -> int:
    raw = os.environ.get("EPICTRL_THREADS", "1")
    try:
        n = int(raw)
    except ValueError as exc:
        raise ParameterError(f"EPICTRL_THREADS must be an integer, got {raw!r}") from exc
    return max(1, n)


def _inputs(args, params, run):
    """Lockdown path, per-capita tests and vaccine schedule for the run."""
    T = params.horizon
    pop = run["population"]
    lam = lockdown_path(np.arange(1, T + 1), params.lambda_bar)
    if getattr(args, "data", None):
        data = ObservedSeries.from_csv(args.data).smooth()
        x_bar = extrapolate_tests(data.tests, T) / pop
    else:
        x_bar = approximate_tests(T, pop)
    if getattr(args, "policy", None):
        lam, x_bar = _read_policy(args.policy, lam, x_bar, pop)
    sched = build_vaccine_schedule(run["vaccine_mean"], run["vaccine_variance"], T)
    return lam, x_bar, sched


def _read_policy(path, lam, x_bar, pop):
    """Overlay a policy CSV (``date`` or ``t`` plus ``lambda`` and/or ``tests``)."""
    lam, x_bar = lam.copy(), x_bar.copy()
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise DataError(f"cannot read policy {path}: {exc}") from exc
    if not rows or not ({"lambda", "tests"} & set(rows[0])):
        raise DataError(f"{path}: need a 'lambda' or 'tests' column")
    try:
        for r in rows:
            t = int(r["t"]) if "t" in r else day_of(r["date"])
            if not 1 <= t <= lam.size:
                continue
            if r.get("lambda"):
                lam[t - 1] = float(r["lambda"])
            if r.get("tests"):
                x_bar[t - 1] = float(r["tests"]) / pop
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad row ({exc})") from exc
    return lam, x_bar


def _charts(out: Path, traj, pop):
    tab = io.trajectory_table(traj)
    t = np.arange(1, traj.horizon + 1)
    svg.write_chart(out / "deaths.svg", t, {"D": tab["D"]}, title="Cumulative deaths (share)",
                    xlabel="day", ylabel="share of population")
    svg.write_chart(out / "infections.svg", t, {"I": tab["I"], "IT": tab["IT"]},
                    title="Infected (share)", xlabel="day", ylabel="share of population")
    svg.write_chart(out / "distancing.svg", t, {"alpha_mean": tab["alpha_mean"], "lambda": tab["lambda"]},
                    title="Participation and activity", xlabel="day", ylabel="share")
    svg.write_chart(out / "r_eff.svg", t, {"R_eff": tab["R_eff"]}, title="Effective reproduction number",
                    xlabel="day", ylabel="R")


def _trajectory_summary(traj, sched, pop):
    from .government import expected_survivors, government_objective, npv_output
    return {"objective": government_objective(traj, sched), "npv_output": npv_output(traj, sched),
            "survivors": expected_survivors(traj, sched), "cumulative_deaths": float(traj.grid.D[-1] * pop),
            "peak_distancing": float(np.max(1.0 - io.trajectory_table(traj)["alpha_mean"]))}


def _diagnostics(out: Path, history):
    rows = [(h[0], h[1], h[2] if len(h) > 2 else float("nan")) for h in history]
    io.write_table(out / "diagnostics.csv", ("iteration", "sup_distance", "objective"), rows)


def _sweep_kwargs(args, run):
    kw = dict(tol=run["outer_tol"], max_iter=run["outer_max_iter"], inner_tol=run["inner_tol"],
              inner_eps=run["inner_eps"], inner_max_iter=run["inner_max_iter"])
    if getattr(args, "eps", None) is not None:
        kw["eps"] = args.eps
    return kw


def cmd_simulate(args, params, run):
    out = Path(args.out)
    lam, x_bar, sched = _inputs(args, params, run)
    try:
        res = inner_sweep(lam, x_bar, params, sched, tol=run["inner_tol"], eps=run["inner_eps"],
                          max_iter=run["inner_max_iter"], record=True)
    except ConvergenceError as exc:
        _diagnostics(out, [(i, d) for i, d in exc.history])
        raise
    io.write_trajectory(out / "trajectory.csv", res.trajectory)
    io.write_summary(out / "summary.csv", _trajectory_summary(res.trajectory, sched, run["population"]))
    _diagnostics(out, [(i, d) for i, d in res.history])
    _charts(out, res.trajectory, run["population"])
    print(f"simulate: {res.iterations} iterations, cumulative deaths "
          f"{res.trajectory.grid.D[-1] * run['population']:.0f}")


def _write_policy_bundle(out: Path, result, sched, pop, label):
    io.write_trajectory(out / "trajectory.csv", result.trajectory)
    summ = _trajectory_summary(result.trajectory, sched, pop)
    summ.update(iterations=result.iterations, converged=result.converged, scenario=label)
    io.write_summary(out / "summary.csv", summ)
    _charts(out, result.trajectory, pop)
    return summ


def cmd_optimize(args, params, run):
    out = Path(args.out)
    if args.xi is not None:
        params = params.replace(xi=args.xi)
    lam, x_bar, sched = _inputs(args, params, run)
    res = outer_sweep(params, x_bar, sched, lam0=lam, raise_on_fail=False, **_sweep_kwargs(args, run))
    _diagnostics(out, res.history)
    summ = _write_policy_bundle(out, res, sched, run["population"], "baseline")
    print(f"optimize: xi={params.xi:g} cumulative deaths {summ['cumulative_deaths']:.0f}, "
          f"NPV output {summ['npv_output']:.6f}, {res.iterations} iterations")
    if not res.converged:
        raise ConvergenceError(f"outer sweep stopped at distance {res.distance:.3e}", res.distance, res.history)


def _parse_grid(text):
    try:
        parts = [float(p) for p in text.split(":")]
    except ValueError as exc:
        raise UsageError(f"bad grid {text!r}; expected start:stop:step") from exc
    if len(parts) != 3 or parts[2] <= 0 or parts[1] < parts[0]:
        raise UsageError(f"bad grid {text!r}; expected start:stop:step with step > 0")
    a, b, s = parts
    n = int(np.floor((b - a) / s + 1e-9)) + 1
    return [a + s * i for i in range(n)]


def _pareto_point(job):
    xi, params, x_bar, lam, sched, kw, pop = job
    fr = pareto_frontier([xi], params, x_bar, sched, pop, lam0=lam, **kw)
    return fr.points, fr.skipped


def cmd_pareto(args, params, run):
    out = Path(args.out)
    grid = _parse_grid(args.grid)
    lam, x_bar, sched = _inputs(args, params, run)
    kw = _sweep_kwargs(args, run)
    pop = run["population"]
    workers = min(_workers(), len(grid))
    if workers > 1:
        jobs = [(xi, params, x_bar, lam, sched, kw, pop) for xi in grid]
        with ProcessPoolExecutor(workers) as ex:
            parts = list(ex.map(_pareto_point, jobs))
        fr = ParetoFrontier([p for ps, _ in parts for p in ps], [s for _, ss in parts for s in ss])
    else:
        fr = pareto_frontier(grid, params, x_bar, sched, pop, lam0=lam, **kw)
    io.write_frontier(out / "frontier.csv", fr)
    xi, npv, surv = fr.arrays()
    if fr.points:
        svg.write_chart(out / "frontier.svg", xi, {"survivors": surv, "npv_output": npv},
                        title="Output and survivors by Pareto weight", xlabel="xi", ylabel="value")
    for xi_s, msg in fr.skipped:
        print(f"pareto: xi={xi_s:g} skipped: {msg}", file=sys.stderr)
    print(f"pareto: {len(fr.points)} points, {len(fr.skipped)} skipped")


def cmd_experiment(args, params, run):
    out = Path(args.out)
    if args.scenario not in SCENARIOS:
        raise UsageError(f"unknown scenario {args.scenario!r}; choose from {', '.join(SCENARIOS)}")
    try:
        scen = Scenario(args.scenario, eta=args.eta)
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    lam, x_bar, sched = _inputs(args, params, run)
    kw = _sweep_kwargs(args, run)
    if scen.kind != "no_lockdown":
        kw["lam0"] = lam
    kw["raise_on_fail"] = False
    res = run_scenario(scen, params, x_bar, sched, run["population"], **kw)
    if res.policy is not None:
        _diagnostics(out, res.policy.history)
    summ = _write_policy_bundle(out, res, sched, run["population"], scen.label)
    print(f"experiment {scen.label}: cumulative deaths {summ['cumulative_deaths']:.0f}, "
          f"peak distancing {summ['peak_distancing']:.3f}")
    if not res.converged:
        raise ConvergenceError("outer sweep did not converge", float("nan"), res.policy.history)


def cmd_calibrate(args, params, run):
    from .calibration import calibrate, apply_theta
    out = Path(args.out)
    if not args.data:
        raise UsageError("calibrate needs --data")
    data = ObservedSeries.from_csv(args.data)
    omega = args.omega if args.omega == "auto" else float(args.omega)
    cfg = CalibrationConfig(omega=omega, starts=args.starts, seed=args.seed, max_evals=args.max_evals)
    T = params.horizon
    lam = lockdown_path(np.arange(1, T + 1), params.lambda_bar)
    x_bar = extrapolate_tests(data.smooth().tests, T) / run["population"]
    sched = build_vaccine_schedule(run["vaccine_mean"], run["vaccine_variance"], T)
    res = calibrate(data, cfg, params, lam, x_bar, sched, run["population"])
    io.write_table(out / "theta.csv", ("parameter", "value"), sorted(res.as_dict().items()))
    io.write_table(out / "starts.csv", ("start", "beta0", "gamma0", "c0", "phi_plus0", "beta", "gamma",
                                        "c", "phi_plus", "loss", "evaluations", "converged"),
                   [(i, *r.x0, *r.theta, r.loss, r.evaluations, r.converged) for i, r in enumerate(res.starts)])
    fit = inner_sweep(lam, x_bar, res.params, sched, tol=run["inner_tol"], eps=run["inner_eps"])
    n = cfg.n_days
    obs = data.smooth().window(n)
    io.write_table(out / "fit.csv", ("date", "deaths_obs", "deaths_model", "positives_obs", "positives_model"),
                   zip(io.trajectory_table(fit.trajectory)["date"][:n], obs.deaths_flow,
                       death_flow(fit.trajectory, run["population"])[:n], obs.positives_flow,
                       positive_flow(fit.trajectory, run["population"])[:n]))
    io.write_summary(out / "loss.csv", {"loss": res.loss, "omega": res.omega, "starts": len(res.starts)})
    print("calibrate: " + ", ".join(f"{k}={v:.6g}" for k, v in res.as_dict().items()) + f", loss {res.loss:.6g}")


def cmd_fit_tests(args, params, run):
    out = Path(args.out)
    if not args.data:
        raise UsageError("fit-tests needs --data")
    data = ObservedSeries.from_csv(args.data).smooth()
    path = extrapolate_tests(data.tests, params.horizon)
    coef = quadratic_coefficients(data.tests)
    io.write_table(out / "tests.csv", ("date", "tests"),
                   zip((date_of(t).isoformat() for t in range(1, params.horizon + 1)), path))
    io.write_table(out / "tests_fit.csv", ("coefficient", "value"), zip(("c0", "c1", "c2"), coef))
    print(f"fit-tests: quadratic {coef[0]:.6g} + {coef[1]:.6g} t + {coef[2]:.6g} t^2")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="epictrl", description="Epidemic control with lockdown, testing and distancing.")
    p.add_argument("--config", help="INI file with [model] and [run] sections")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    def common(sp, data=True):
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--seed", type=int, default=0)
        if data:
            sp.add_argument("--data", help="CSV with date,deaths,positives,hospitalized,tests")

    sp = sub.add_parser("simulate", help="agent equilibrium under given policies")
    common(sp)
    sp.add_argument("--policy", help="CSV overriding lambda and/or tests by date")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("optimize", help="optimal lockdown policy")
    common(sp)
    sp.add_argument("--xi", type=float)
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_optimize)

    sp = sub.add_parser("pareto", help="output/survivor frontier over Pareto weights")
    common(sp)
    sp.add_argument("--grid", default="0:30:1", help="start:stop:step")
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_pareto)

    sp = sub.add_parser("experiment", help="counterfactual scenario")
    common(sp)
    sp.add_argument("--scenario", required=True)
    sp.add_argument("--eta", type=float)
    sp.add_argument("--xi", type=float)
    sp.add_argument("--eps", type=float)
    sp.set_defaults(func=cmd_experiment)

    sp = sub.add_parser("calibrate", help="fit beta, gamma, c, phi_plus to data")
    common(sp)
    sp.add_argument("--omega", default="auto")
    sp.add_argument("--starts", type=int, default=20)
    sp.add_argument("--max-evals", type=int, default=400)
    sp.set_defaults(func=cmd_calibrate)

    sp = sub.add_parser("fit-tests", help="extrapolate test counts")
    common(sp)
    sp.set_defaults(func=cmd_fit_tests)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        params, run = load_config(args.config)
        if getattr(args, "xi", None) is not None:
            params = params.replace(xi=args.xi)
        args.func(args, params, run)
    except UsageError as exc:
        print(f"epictrl: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParameterError as exc:
        print(f"epictrl: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConvergenceError as exc:
        print(f"epictrl: no convergence: {exc}", file=sys.stderr)
        return EXIT_NONCONV
    except (DataError, OSError) as exc:
        print(f"epictrl: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except EpictrlError as exc:
        print(f"epictrl: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
