"""Receding-horizon control of the forced Lorenz system with identified models.

At every step a piecewise-constant control sequence of ``N`` values is
optimised by single shooting on the model, and only its first value is
applied to the true system.  The horizon problem

    J = sum_{k=1..N} (x_k - x*)^T Q (x_k - x*) + r u_k^2,   u_min <= u_k <= u_max

is a bounded nonlinear least-squares problem in ``u``; it is solved with
:func:`scipy.optimize.least_squares` (trust-region reflective), using a
Jacobian from one batched finite-difference sweep over the horizon.  Two
starts are tried: all zeros and the previous solution shifted by one step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .ensemble import default_ensemble_config, identify
from .exceptions import ConvergenceWarning, EsindyError, ParameterError
from .forecasting import model_rhs
from .io import write_csv, write_json
from .library import DataMatrix
from .regression import RegressionConfig
from .systems import LORENZ_U0, SystemDefinition, add_noise, forced_lorenz, simulate_ode

__all__ = [
    "MpcConfig",
    "MpcSolution",
    "MpcExperiment",
    "predict_batch",
    "horizon_cost",
    "solve_horizon",
    "mpc_step",
    "closed_loop",
    "excitation_signal",
    "run_mpc_experiment",
    "MPC_METHODS",
    "DEFAULT_NOISE_MODE",
]

MPC_METHODS = ("sindy", "esindy")
# measurement noise variance is `noise` times the signal RMS
DEFAULT_NOISE_MODE = "variance_over_rms"
_PENALTY = 1e6


@dataclass(frozen=True)
class MpcConfig:
    """Horizon problem and closed-loop settings.

    The defaults (``Q = I``, ``r = 0.001``, ``N = 10``, ``dt = 0.01``,
    ``|u| <= 50``) are declared choices, not reproduced values.
    """

    horizon_steps: int = 10
    control_bounds: tuple[float, float] = (-50.0, 50.0)
    state_weight: tuple[float, ...] = (1.0, 1.0, 1.0)
    control_weight: float = 0.001
    target: tuple[float, ...] = (float(np.sqrt(72.0)), float(np.sqrt(72.0)), 27.0)
    dt: float = 0.01
    total_steps: int = 200
    max_nfev: int = 50

    def __post_init__(self):
        object.__setattr__(self, "control_bounds", tuple(float(v) for v in self.control_bounds))
        object.__setattr__(self, "state_weight", tuple(float(v) for v in self.state_weight))
        object.__setattr__(self, "target", tuple(float(v) for v in self.target))
        if int(self.horizon_steps) < 1:
            raise ParameterError("horizon_steps must be >= 1")
        lo, hi = self.control_bounds
        if not lo < hi:
            raise ParameterError(f"control bounds must satisfy u_min < u_max, got {self.control_bounds}")
        if any(w < 0 for w in self.state_weight) or self.control_weight < 0:
            raise ParameterError("weights must be non-negative")
        if len(self.state_weight) != len(self.target):
            raise ParameterError("state_weight and target must have the same length")
        if not self.dt > 0 or int(self.total_steps) < 1:
            raise ParameterError("need dt > 0 and total_steps >= 1")

    def to_dict(self) -> dict:
        return {
            "horizon_steps": self.horizon_steps,
            "control_bounds": list(self.control_bounds),
            "state_weight": list(self.state_weight),
            "control_weight": self.control_weight,
            "target": list(self.target),
            "dt": self.dt,
            "total_steps": self.total_steps,
            "max_nfev": self.max_nfev,
        }


def predict_batch(model: SystemDefinition, x0, useqs: np.ndarray, dt: float) -> np.ndarray:
    """RK4 predictions for a batch of control sequences, shape (B, N, n).

    Entry ``[b, k]`` is the state after applying ``useqs[b, :k + 1]``.
    """
    useqs = np.atleast_2d(np.asarray(useqs, dtype=float))
    B, N = useqs.shape
    x = np.repeat(np.asarray(x0, dtype=float)[None], B, axis=0)
    out = np.empty((B, N, x.shape[1]))
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(N):
            u = useqs[:, k]
            k1 = model(x, u)
            k2 = model(x + 0.5 * dt * k1, u)
            k3 = model(x + 0.5 * dt * k2, u)
            k4 = model(x + dt * k3, u)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            out[:, k] = x
    return out


def _residuals(model, x0, useqs, cfg: MpcConfig) -> np.ndarray:
    pred = predict_batch(model, x0, useqs, cfg.dt)
    err = (pred - np.asarray(cfg.target)) * np.sqrt(np.asarray(cfg.state_weight))
    res = np.concatenate([err.reshape(len(useqs), -1), np.sqrt(cfg.control_weight) * np.atleast_2d(useqs)], axis=1)
    return np.where(np.isfinite(res), np.clip(res, -_PENALTY, _PENALTY), _PENALTY)


def horizon_cost(model: SystemDefinition, x0, useq, cfg: MpcConfig) -> float:
    """``J`` of one control sequence under ``model``."""
    r = _residuals(model, x0, np.asarray(useq, dtype=float)[None], cfg)[0]
    return float(r @ r)


@dataclass(frozen=True)
class MpcSolution:
    sequence: np.ndarray
    cost: float
    converged: bool


def solve_horizon(model: SystemDefinition, state, cfg: MpcConfig, previous=None) -> MpcSolution:
    """Optimal control sequence over the horizon from ``state``.

    Starts from zero and from ``previous`` shifted by one step (if given) and
    keeps the cheaper result.  Emits :class:`ConvergenceWarning` when no start
    converged; the best sequence found is still returned.
    """
    N = int(cfg.horizon_steps)
    lo, hi = cfg.control_bounds
    starts = [np.clip(np.zeros(N), lo, hi)]
    if previous is not None:
        prev = np.asarray(previous, dtype=float)
        starts.append(np.clip(np.concatenate([prev[1:], prev[-1:]]), lo, hi))
    span = hi - lo

    def fun(u):
        return _residuals(model, state, u[None], cfg)[0]

    def jac(u):
        h = 1e-6 * np.maximum(1.0, np.abs(u))
        step = np.where(u + h > hi, -h, h)
        batch = np.vstack([u, u + np.diag(step)])
        r = _residuals(model, state, batch, cfg)
        return ((r[1:] - r[0]) / step[:, None]).T

    best = None
    any_ok = False
    for u0 in starts:
        # least_squares needs a strictly feasible start
        u0 = np.clip(u0, lo + 1e-9 * span, hi - 1e-9 * span)
        sol = least_squares(fun, u0, jac=jac, bounds=(lo, hi), method="trf", max_nfev=int(cfg.max_nfev))
        u = np.clip(sol.x, lo, hi)
        cost = horizon_cost(model, state, u, cfg)
        any_ok |= bool(sol.success)
        if best is None or cost < best.cost:
            best = MpcSolution(u, cost, bool(sol.success))
    if not any_ok:
        warnings.warn("horizon optimisation did not converge; using best sequence found", ConvergenceWarning,
                      stacklevel=2)
    return best


def mpc_step(model: SystemDefinition, state, cfg: MpcConfig | None = None, previous=None) -> float:
    """First control value of the optimal horizon sequence."""
    cfg = cfg or MpcConfig()
    return float(solve_horizon(model, state, cfg, previous).sequence[0])


def closed_loop(plant: SystemDefinition, model: SystemDefinition, x0, cfg: MpcConfig):
    """Run MPC on ``plant`` using ``model`` for prediction.

    Returns ``(states, controls, mean_cost)``; states has ``total_steps + 1``
    rows.  The cost is the realised stage cost averaged over the steps and is
    ``inf`` if the plant diverges.
    """
    K = int(cfg.total_steps)
    x = np.asarray(x0, dtype=float)
    states = np.full((K + 1, x.size), np.nan)
    states[0] = x
    controls = np.full(K, np.nan)
    Q = np.asarray(cfg.state_weight)
    target = np.asarray(cfg.target)
    total = 0.0
    prev = None
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        for k in range(K):
            sol = solve_horizon(model, x, cfg, prev)
            prev = sol.sequence
            u = float(sol.sequence[0])
            with np.errstate(over="ignore", invalid="ignore"):
                x = predict_batch(plant, x, np.array([[u]]), cfg.dt)[0, 0]
            if not np.all(np.isfinite(x)) or np.max(np.abs(x)) > _PENALTY:
                return states, controls, float("inf")
            states[k + 1] = x
            controls[k] = u
            e = x - target
            total += float(e @ (Q * e) + cfg.control_weight * u * u)
    return states, controls, total / K


def excitation_signal(n_steps: int, dt: float, rng, amplitude: float = 10.0, n_tones: int = 8,
                      base_frequency: float = 1.0) -> np.ndarray:
    """Multi-sine training input with Schroeder phases and a seeded phase shift.

    Tones sit at ``k * base_frequency`` Hz for ``k = 1..n_tones``; the sum is
    scaled so its peak magnitude is close to ``amplitude``.
    """
    rng = np.random.default_rng(rng) if not isinstance(rng, np.random.Generator) else rng
    t = dt * np.arange(int(n_steps))
    k = np.arange(1, n_tones + 1)
    phases = -np.pi * k * (k - 1) / n_tones + rng.uniform(0, 2 * np.pi)
    u = np.sin(2 * np.pi * base_frequency * k[None, :] * t[:, None] + phases[None, :]).sum(axis=1)
    return amplitude * u / np.sqrt(n_tones / 2.0) / np.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class MpcExperiment:
    """Closed-loop result of one training realisation."""

    mean_cost: float
    states: np.ndarray
    controls: np.ndarray
    coefficients: object
    identified: bool
    config: dict = field(default_factory=dict)

    @property
    def final_error(self) -> np.ndarray:
        return np.abs(self.states[-1] - np.asarray(self.config["mpc"]["target"]))

    def write(self, stem) -> None:
        """``<stem>.csv`` with ``t, x, y, z, u`` and ``<stem>.json`` summary."""
        dt = self.config["mpc"]["dt"]
        u = np.concatenate([self.controls, [np.nan]])
        rows = [[k * dt, *self.states[k], u[k]] for k in range(len(self.states))]
        write_csv(f"{stem}.csv", ["t", "x", "y", "z", "u"], rows)
        summary = {
            "mean_cost": self.mean_cost,
            "identified": self.identified,
            "final_error": self.final_error,
            "coefficients": None if self.coefficients is None else self.coefficients.to_dict(),
            "config": self.config,
            "seed": self.config.get("seed"),
        }
        write_json(f"{stem}.json", summary)


def run_mpc_experiment(
    train_steps: int,
    noise: float = 0.01,
    method: str = "esindy",
    cfg: MpcConfig | None = None,
    seed: int = 0,
    *,
    model: SystemDefinition | None = None,
    lambda1: float = 0.2,
    ensemble_method: str = "library_bagging",
    n_models: int = 100,
    noise_mode: str = DEFAULT_NOISE_MODE,
    x0=LORENZ_U0,
    train_x0=LORENZ_U0,
    threads: int = 1,
) -> MpcExperiment:
    """Identify a forced-Lorenz model from a short noisy run, then control it.

    ``method="sindy"`` fits a single thresholded regression; ``"esindy"``
    uses ``ensemble_method``.  Passing ``model`` skips identification.  A
    failed identification or a diverging closed loop yields ``mean_cost = inf``.
    """
    cfg = cfg or MpcConfig()
    method = method.lower()
    if method not in MPC_METHODS:
        raise ParameterError(f"method must be one of {MPC_METHODS}, got {method!r}")
    plant = forced_lorenz()
    spec = plant.library_spec
    if int(train_steps) < 5:
        raise ParameterError("train_steps must be >= 5")
    n_terms = 15
    if int(train_steps) < n_terms:
        warnings.warn(f"{train_steps} training steps for {n_terms} library terms; regression is underdetermined",
                      RuntimeWarning, stacklevel=2)
    ss = np.random.SeedSequence(int(seed))
    exc_rng, noise_rng = (np.random.default_rng(s) for s in ss.spawn(2))
    config = {
        "train_steps": int(train_steps), "noise": float(noise), "method": method, "seed": int(seed),
        "lambda1": lambda1, "ensemble_method": ensemble_method, "n_models": n_models, "noise_mode": noise_mode,
        "x0": [float(v) for v in x0], "train_x0": [float(v) for v in train_x0], "mpc": cfg.to_dict(),
    }
    coefs = None
    if model is None:
        u_train = excitation_signal(int(train_steps), cfg.dt, exc_rng)
        try:
            clean = simulate_ode(plant, train_x0, (int(train_steps) - 1) * cfg.dt, cfg.dt, control=u_train[:, None])
            data = add_noise(clean, noise, noise_rng, noise_mode)
            data = DataMatrix(data.values, data.dt, ("x", "y", "z"))
            reg = RegressionConfig(lambda1=lambda1)
            fit_method = "sindy" if method == "sindy" else ensemble_method
            ens = default_ensemble_config(fit_method, n_models=n_models, seed=int(seed))
            coefs, _ = identify(fit_method, data, spec, reg, ens, controls=u_train[:, None], threads=threads)
        except (EsindyError, np.linalg.LinAlgError):
            coefs = None
        if coefs is None or not np.any(coefs.xi):
            return MpcExperiment(float("inf"), np.asarray([x0], dtype=float), np.empty(0), coefs, False, config)
        model = model_rhs(coefs, spec)
    states, controls, J = closed_loop(plant, model, x0, cfg)
    return MpcExperiment(J, states, controls, coefs, True, config)
