"""Command-line entry point.

Every subcommand reads its settings from three layers, highest first:
command-line flags, a JSON file given with ``--config``, built-in defaults.
Unknown keys in the file are rejected.  Exit status is 0 on success, 1 for
invalid input and 2 for numerical failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import warnings
from pathlib import Path

import numpy as np

from . import active, bench, ensemble, forecasting, io, metrics, mpc, systems, weak
from .differentiation import DERIVATIVE_METHODS, differentiate
from .exceptions import ConfigError, EsindyError, InputError, NumericalError
from .library import LibrarySpec, build_library
from .regression import RegressionConfig, sparsify_dynamics

ODE_SYSTEMS = ("lorenz", "forced_lorenz", "lotka_volterra")
PDE_SYSTEMS = ("burgers", "kdv", "kuramoto_sivashinsky")

# per-command defaults; these keys are the complete config vocabulary
DEFAULTS = {
    "simulate": {
        "system": "lorenz", "T": None, "dt": None, "u0": None, "noise": 0.0, "noise_mode": "percent_rms",
        "n_points": None, "save_every": 1, "seed": 0, "output": "simulation.csv",
    },
    "discover": {
        "input": None, "degree": 2, "constant": True, "lambda1": 0.2, "lambda2": 0.0, "normalize": False,
        "derivative": "finite_difference", "output": None,
    },
    "ensemble": {
        "input": None, "method": "bagging", "q": 100, "tol": None, "aggregation": None, "library_fraction": 0.6,
        "degree": 2, "constant": True, "lambda1": 0.2, "lambda2": 0.0, "derivative": "finite_difference",
        "with_replacement": False, "seed": 0, "output": None,
    },
    "weak": {
        "input": None, "system": "burgers", "noise": 0.0, "degree": 3, "derivative_order": 3,
        "n_domains": 256, "test_degree": 4, "method": "library_bagging", "q": 100, "tol": 0.4,
        "lambda1": 0.1, "seed": 0, "output": None,
    },
    "forecast": {
        "input": None, "method": "library_bagging", "degree": 2, "constant": True, "lambda1": 0.2, "q": 100,
        "tol": None, "derivative": "finite_difference", "T": None, "dt": None, "u0": None, "n_draws": 1000,
        "draw_size": 5, "coverage": 0.95, "seed": 0, "output": "forecast.csv",
    },
    "sweep": {
        "noise_levels": [0.025], "durations": [10.0], "methods": list(metrics.SWEEP_METHODS),
        "n_realizations": 100, "noise_mode": "percent_rms", "q": 100, "lambda1": 0.2, "seed": 0,
        "output": "sweep",
    },
    "hudson-bay": {
        "input": None, "lambda1": 0.2, "tol": 0.4, "q": 100, "library_fraction": 0.6, "n_draws": 1000,
        "draw_size": 5, "coverage": 0.95, "seed": 0, "output": None,
    },
    "active": {
        "n_iterations": 20, "n_candidates": 200, "horizon": 1, "probe_samples": 10, "initial_budget": 100,
        "noise": 0.01, "selection": "variance", "method": "bagging", "derivative": "finite_difference_4",
        "seed": 0, "output": "active.json",
    },
    "mpc": {
        "train_steps": 50, "noise": 0.01, "noise_mode": mpc.DEFAULT_NOISE_MODE, "method": "esindy",
        "ensemble_method": "library_bagging", "total_steps": 200, "horizon": 10, "control_weight": 0.001,
        "seed": 0, "output": "mpc",
    },
    "bench": {"criteria": list(range(1, 11)), "output": None},
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _add(p, name, typ=None, **kw):
    dest = name.lstrip("-").replace("-", "_")
    if typ is bool:
        p.add_argument(name, dest=dest, action=argparse.BooleanOptionalAction, default=None, **kw)
    else:
        p.add_argument(name, dest=dest, type=typ, default=None, **kw)


def _floats(s: str) -> list[float]:
    return [float(v) for v in s.split(",") if v.strip()]


def _dashed(names) -> list[str]:
    """Accept both ``library-bagging`` and ``library_bagging`` spellings."""
    out = [n.replace("_", "-") for n in names]
    return out + [n for n in names if n not in out]


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="esindy", description="Ensemble sparse identification of nonlinear dynamics")
    parser.add_argument("--threads", dest="global_threads", type=int, default=1,
                        help="worker threads (results do not depend on it)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def command(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", default=None, help="JSON file with settings")
        p.add_argument("--threads", type=int, default=None, help=argparse.SUPPRESS)
        _add(p, "--output")
        return p

    p = command("simulate", "generate reference data")
    _add(p, "--system", choices=ODE_SYSTEMS + PDE_SYSTEMS)
    _add(p, "--T", float)
    _add(p, "--dt", float)
    _add(p, "--u0", _floats)
    _add(p, "--noise", float)
    _add(p, "--noise-mode", choices=systems.NOISE_MODES)
    _add(p, "--n-points", int)
    _add(p, "--save-every", int)
    _add(p, "--seed", int)

    for name, help_ in (("discover", "single thresholded regression"), ("ensemble", "ensemble regression")):
        p = command(name, help_)
        _add(p, "--input")
        _add(p, "--degree", int)
        _add(p, "--constant", bool)
        _add(p, "--lambda1", float)
        _add(p, "--lambda2", float)
        _add(p, "--derivative", choices=DERIVATIVE_METHODS)
        if name == "discover":
            _add(p, "--normalize", bool)
        else:
            _add(p, "--method", choices=_dashed(ensemble.ENSEMBLE_METHODS))
            _add(p, "--q", int)
            _add(p, "--tol", float)
            _add(p, "--aggregation", choices=("mean", "median"))
            _add(p, "--library-fraction", float)
            _add(p, "--with-replacement", bool)
            _add(p, "--seed", int)

    p = command("weak", "PDE discovery with the weak formulation")
    _add(p, "--input")
    _add(p, "--system", choices=PDE_SYSTEMS)
    _add(p, "--noise", float)
    _add(p, "--degree", int)
    _add(p, "--derivative-order", int)
    _add(p, "--n-domains", int)
    _add(p, "--test-degree", int)
    _add(p, "--method", choices=_dashed(("sindy", "bagging", "bragging", "library_bagging")))
    _add(p, "--q", int)
    _add(p, "--tol", float)
    _add(p, "--lambda1", float)
    _add(p, "--seed", int)

    p = command("forecast", "ensemble probabilistic forecast")
    _add(p, "--input")
    _add(p, "--method", choices=_dashed(("bagging", "bragging", "library_bagging")))
    _add(p, "--degree", int)
    _add(p, "--constant", bool)
    _add(p, "--lambda1", float)
    _add(p, "--q", int)
    _add(p, "--tol", float)
    _add(p, "--derivative", choices=DERIVATIVE_METHODS)
    _add(p, "--T", float)
    _add(p, "--dt", float)
    _add(p, "--u0", _floats)
    _add(p, "--n-draws", int)
    _add(p, "--draw-size", int)
    _add(p, "--coverage", float)
    _add(p, "--seed", int)

    p = command("sweep", "noise / data-length sensitivity table on Lorenz")
    _add(p, "--noise-levels", _floats)
    _add(p, "--durations", _floats)
    _add(p, "--methods", lambda s: [v.strip() for v in s.split(",") if v.strip()])
    _add(p, "--n-realizations", int)
    _add(p, "--noise-mode", choices=systems.NOISE_MODES)
    _add(p, "--q", int)
    _add(p, "--lambda1", float)
    _add(p, "--seed", int)

    p = command("hudson-bay", "library bagging on the lynx-hare pelt data")
    _add(p, "--input")
    _add(p, "--lambda1", float)
    _add(p, "--tol", float)
    _add(p, "--q", int)
    _add(p, "--library-fraction", float)
    _add(p, "--n-draws", int)
    _add(p, "--draw-size", int)
    _add(p, "--coverage", float)
    _add(p, "--seed", int)

    p = command("active", "active learning on Lorenz")
    _add(p, "--n-iterations", int)
    _add(p, "--n-candidates", int)
    _add(p, "--horizon", int)
    _add(p, "--probe-samples", int)
    _add(p, "--initial-budget", int)
    _add(p, "--noise", float)
    _add(p, "--selection", choices=("variance", "random"))
    _add(p, "--method", choices=ensemble.ENSEMBLE_METHODS[:3])
    _add(p, "--derivative", choices=DERIVATIVE_METHODS)
    _add(p, "--seed", int)

    p = command("mpc", "model predictive control of forced Lorenz")
    _add(p, "--train-steps", int)
    _add(p, "--noise", float)
    _add(p, "--noise-mode", choices=systems.NOISE_MODES)
    _add(p, "--method", choices=mpc.MPC_METHODS)
    _add(p, "--ensemble-method", choices=("bagging", "bragging", "library_bagging"))
    _add(p, "--total-steps", int)
    _add(p, "--horizon", int)
    _add(p, "--control-weight", float)
    _add(p, "--seed", int)

    p = command("bench", "run acceptance criteria")
    _add(p, "--criteria", lambda s: [int(v) for v in s.split(",") if v.strip()])
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    """Merge defaults, the ``--config`` file and explicit flags."""
    cfg = dict(DEFAULTS[command])
    if args.config:
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {path} must contain a JSON object")
        for key in loaded:
            if key not in cfg:
                raise ConfigError(f"unknown config key {key!r} for '{command}' (allowed: {sorted(cfg)})")
        cfg.update(loaded)
    for key in cfg:
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            cfg[key] = v
    return cfg


def _echo(cfg: dict) -> dict:
    """Config as recorded in artifacts; the output location is left out so
    the same run written to two places gives identical files."""
    return {k: v for k, v in cfg.items() if k != "output"}


def _load_series(path):
    if path is None:
        path = systems.data_dir() / "lorenz_clean.csv"
    data, _ = io.read_data_csv(path)
    return data


def _library(cfg) -> LibrarySpec:
    return LibrarySpec(polynomial_degree=int(cfg["degree"]), include_constant=bool(cfg["constant"]))


def cmd_simulate(cfg, threads, out):
    name = cfg["system"]
    rng = np.random.default_rng(int(cfg["seed"]))
    if name in PDE_SYSTEMS:
        field = systems.simulate_pde(name, cfg["n_points"], None, cfg["T"], cfg["dt"], save_every=int(cfg["save_every"]))
        field = systems.add_noise(field, float(cfg["noise"]), rng, cfg["noise_mode"])
        io.write_field(cfg["output"], field, {"config": _echo(cfg), "seed": cfg["seed"]})
        print(f"wrote {field.m} x {field.n} field to {cfg['output']}", file=out)
        return 0
    sys_def = getattr(systems, name)()
    T = 10.0 if cfg["T"] is None else float(cfg["T"])
    dt = 0.01 if cfg["dt"] is None else float(cfg["dt"])
    u0 = cfg["u0"] if cfg["u0"] is not None else (
        systems.LORENZ_U0 if "lorenz" in name else (30.0, 4.0))
    control = None
    if sys_def.control_dim:
        m = systems.n_samples(T, dt)
        control = mpc.excitation_signal(m, dt, rng)[:, None]
    data = systems.simulate_ode(sys_def, u0, T, dt, control)
    data = systems.add_noise(data, float(cfg["noise"]), rng, cfg["noise_mode"])
    io.write_data_csv(cfg["output"], data, control)
    io.write_json(Path(cfg["output"]).with_suffix(".json"), {"config": _echo(cfg), "seed": cfg["seed"]})
    print(f"wrote {data.m} samples of {name} to {cfg['output']}", file=out)
    return 0


def cmd_discover(cfg, threads, out):
    data = _load_series(cfg["input"])
    spec = _library(cfg)
    reg = RegressionConfig(lambda1=cfg["lambda1"], lambda2=cfg["lambda2"], normalize_columns=bool(cfg["normalize"]))
    xi = sparsify_dynamics(build_library(data, spec), differentiate(data, cfg["derivative"]), reg, labels=data.names)
    for line in xi.equations():
        print(line, file=out)
    if cfg["output"]:
        io.write_json(cfg["output"], {"model": xi.to_dict(), "equations": xi.equations(), "config": _echo(cfg),
                                      "seed": None})
    return 0


def _ens_config(cfg, method):
    overrides = {"n_models": int(cfg["q"]), "seed": int(cfg.get("seed", 0))}
    if cfg.get("tol") is not None:
        overrides["ip_threshold"] = float(cfg["tol"])
    if cfg.get("library_fraction") is not None:
        overrides["library_fraction"] = float(cfg["library_fraction"])
    if cfg.get("aggregation"):
        overrides["aggregation"] = cfg["aggregation"]
    return ensemble.default_ensemble_config(method, **overrides)


def cmd_ensemble(cfg, threads, out):
    data = _load_series(cfg["input"])
    method = cfg["method"].replace("-", "_")
    ens = _ens_config(cfg, method)
    reg = RegressionConfig(lambda1=cfg["lambda1"], lambda2=cfg["lambda2"])
    theta = build_library(data, _library(cfg))
    ut = differentiate(data, cfg["derivative"])
    res = ensemble.run_ensemble(method, theta, ut, reg, ens, threads=threads, state_labels=data.names,
                                with_replacement=bool(cfg["with_replacement"]))
    xi = res if method == "stability_selection" else res.aggregated
    for line in xi.equations():
        print(line, file=out)
    if cfg["output"]:
        body = {"model": xi.to_dict(), "equations": xi.equations(), "config": _echo(cfg), "seed": ens.seed,
                "ensemble": ens.to_dict()}
        if method != "stability_selection":
            body["result"] = res.to_dict()
        io.write_json(cfg["output"], body)
    return 0


def cmd_weak(cfg, threads, out):
    if cfg["input"]:
        field = io.read_field(cfg["input"])
    else:
        field = systems.simulate_pde(cfg["system"])
    rng = np.random.default_rng(int(cfg["seed"]))
    field = systems.add_noise(field, float(cfg["noise"]), rng)
    spec = LibrarySpec(polynomial_degree=int(cfg["degree"]), spatial_derivative_order=int(cfg["derivative_order"]),
                       include_mixed_terms=True)
    wcfg = weak.WeakConfig(n_domains=int(cfg["n_domains"]), test_function_degree=int(cfg["test_degree"]),
                           seed=int(cfg["seed"]))
    reg = RegressionConfig(lambda1=float(cfg["lambda1"]), normalize_columns=True)
    method = cfg["method"].replace("-", "_")
    if method == "sindy":
        xi = weak.weak_fit(field, spec, wcfg, reg)
        body = {"model": xi.to_dict()}
    else:
        ens = ensemble.EnsembleConfig(n_models=int(cfg["q"]), ip_threshold=float(cfg["tol"]), seed=int(cfg["seed"]))
        res = weak.discover_pde(field, spec, wcfg, reg, ens, method, threads)
        xi = res.aggregated
        body = {"model": xi.to_dict(), "result": res.to_dict()}
    line = xi.equations()[0].replace("du/dt", "u_t")
    print(line, file=out)
    if cfg["output"]:
        io.write_json(cfg["output"], {**body, "equation": line, "config": _echo(cfg), "seed": cfg["seed"],
                                      "weak": wcfg.to_dict()})
    return 0


def cmd_forecast(cfg, threads, out):
    data = _load_series(cfg["input"])
    method = cfg["method"].replace("-", "_")
    spec = _library(cfg)
    ens = _ens_config(cfg, method)
    reg = RegressionConfig(lambda1=cfg["lambda1"])
    _, res = ensemble.identify(method, data, spec, reg, ens, derivative=cfg["derivative"], threads=threads)
    T = (data.m - 1) * data.dt if cfg["T"] is None else float(cfg["T"])
    dt = data.dt if cfg["dt"] is None else float(cfg["dt"])
    u0 = data.values[0] if cfg["u0"] is None else np.asarray(cfg["u0"], dtype=float)
    fc = forecasting.ensemble_forecast(res, spec, u0, T, dt, int(cfg["n_draws"]), int(cfg["draw_size"]),
                                       float(cfg["coverage"]), int(cfg["seed"]), t0=data.t0)
    fc.to_csv(cfg["output"])
    io.write_json(Path(cfg["output"]).with_suffix(".json"),
                  {"config": _echo(cfg), "seed": cfg["seed"], "model": res.aggregated.to_dict(), "forecast": fc.config,
                   "diverged_draws": int(np.count_nonzero(fc.diverged_at < len(fc.times)))})
    for line in res.aggregated.equations():
        print(line, file=out)
    print(f"wrote forecast bands to {cfg['output']}", file=out)
    return 0


def cmd_sweep(cfg, threads, out):
    grid = metrics.SweepGrid(tuple(cfg["noise_levels"]), tuple(cfg["durations"]), tuple(cfg["methods"]))
    rep = metrics.sweep(grid, int(cfg["n_realizations"]), int(cfg["seed"]), lambda1=float(cfg["lambda1"]),
                        n_models=int(cfg["q"]), noise_mode=cfg["noise_mode"], threads=threads)
    rep.write(cfg["output"])
    for row in rep.table:
        print(f"noise={row['noise']:g} T={row['duration']:g} {row['method']:<20} "
              f"success={row['success_rate']:.2f} E_c={row['mean_coefficient_error']:.4f}", file=out)
    return 0


def cmd_hudson_bay(cfg, threads, out):
    data = systems.load_hudson_bay(cfg["input"])
    res = forecasting.hudson_bay_pipeline(
        data, lambda1=float(cfg["lambda1"]), ip_threshold=float(cfg["tol"]), n_models=int(cfg["q"]),
        library_fraction=float(cfg["library_fraction"]), seed=int(cfg["seed"]), n_draws=int(cfg["n_draws"]),
        draw_size=int(cfg["draw_size"]), coverage=float(cfg["coverage"]), threads=threads)
    for line in res.coefficients.equations(4):
        print(line, file=out)
    print(f"identified in {res.elapsed:.2f} s", file=out)
    if cfg["output"]:
        stem = Path(cfg["output"])
        res.forecast.to_csv(stem.with_suffix(".csv"))
        io.write_json(stem.with_suffix(".json"), {
            "model": res.coefficients.to_dict(), "equations": res.coefficients.equations(4),
            "inclusion_probabilities": res.ensemble.inclusion_probabilities, "scale": res.scale,
            "config": {**_echo(cfg), **res.config}, "seed": cfg["seed"]})
    return 0


def cmd_active(cfg, threads, out):
    acfg = active.ActiveConfig(
        n_candidate_ics=int(cfg["n_candidates"]), probe_horizon_steps=int(cfg["horizon"]),
        probe_samples=int(cfg["probe_samples"]), n_iterations=int(cfg["n_iterations"]),
        initial_data_budget=int(cfg["initial_budget"]), noise=float(cfg["noise"]), selection=cfg["selection"],
        method=cfg["method"], derivative=cfg["derivative"], seed=int(cfg["seed"]))
    hist = active.active_loop(cfg=acfg, threads=threads)
    active.write_history(cfg["output"], hist, acfg)
    for h in hist:
        print(f"iter {h.iteration:3d} samples={h.n_samples:4d} success={h.report.success!s:5} "
              f"E_c={h.report.coefficient_error:.4f} mean_std={h.mean_std:.4g}", file=out)
    return 0


def cmd_mpc(cfg, threads, out):
    mcfg = mpc.MpcConfig(horizon_steps=int(cfg["horizon"]), control_weight=float(cfg["control_weight"]),
                         total_steps=int(cfg["total_steps"]))
    exp = mpc.run_mpc_experiment(int(cfg["train_steps"]), float(cfg["noise"]), cfg["method"], mcfg, int(cfg["seed"]),
                                 ensemble_method=cfg["ensemble_method"], noise_mode=cfg["noise_mode"],
                                 threads=threads)
    exp.write(cfg["output"])
    print(f"mean cost {exp.mean_cost:.6g}; final |x - x*| = {np.round(exp.final_error, 4).tolist()}", file=out)
    return 0


def cmd_bench(cfg, threads, out):
    results = bench.run(cfg["criteria"], threads=threads, stream=out)
    if cfg["output"]:
        io.write_json(cfg["output"], {"criteria": [r.to_dict() for r in results]})
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "discover": cmd_discover,
    "ensemble": cmd_ensemble,
    "weak": cmd_weak,
    "forecast": cmd_forecast,
    "sweep": cmd_sweep,
    "hudson-bay": cmd_hudson_bay,
    "active": cmd_active,
    "mpc": cmd_mpc,
    "bench": cmd_bench,
}


def main(argv=None, out=None, err=None) -> int:
    out = out or sys.stdout
    err = err or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        threads = args.threads if args.threads is not None else args.global_threads
        if threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = resolve_config(args.command, args)
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            warnings.showwarning = lambda msg, cat, *a, **k: print(f"warning: {msg}", file=err)
            return COMMANDS[args.command](cfg, threads, out)
    except InputError as exc:
        print(f"error: {exc}", file=err)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=err)
        return 2
    except (TypeError, ValueError, KeyError) as exc:
        # wrongly typed config values surface here
        print(f"error: invalid configuration: {exc}", file=err)
        return 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
