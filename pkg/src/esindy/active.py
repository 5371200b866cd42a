"""Active learning: sample where the ensemble disagrees most.

Each iteration draws candidate initial conditions, integrates every ensemble
member a few steps from each, and scores the candidate by the spread of the
members' end states.  The true system is then sampled from the winner, the
new short trajectory joins the training set and the ensemble is refitted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .differentiation import differentiate
from .ensemble import EnsembleConfig, EnsembleResult, default_ensemble_config, member_rng, run_ensemble
from .exceptions import CoverageWarning, ParameterError
from .forecasting import DIVERGENCE_BOUND, _terms_for
from .io import write_json
from .library import DataMatrix, EvaluatedLibrary, LibrarySpec, build_library, evaluate_terms, library_terms
from .metrics import TrialReport
from .regression import RegressionConfig
from .systems import SystemDefinition, lorenz, simulate_ode

__all__ = ["ActiveConfig", "ActiveStep", "forecast_variance", "candidate_variances", "active_loop",
           "LORENZ_IC_REGION", "write_history"]

LORENZ_IC_REGION = ((-20.0, 20.0), (-20.0, 20.0), (0.0, 40.0))

_STAGE_INITIAL = 10
_STAGE_CANDIDATES = 11
_STAGE_NOISE = 12


@dataclass(frozen=True)
class ActiveConfig:
    """Settings of the active-learning loop.

    Attributes
    ----------
    n_candidate_ics : int
        Candidates scored per iteration.
    probe_horizon_steps : int
        Steps each member is integrated when scoring a candidate.
    probe_samples : int
        Samples of the true system appended per iteration.
    n_iterations : int
    initial_data_budget : int
        Samples in the initial random trajectory.
    ic_sampling_region : tuple of (low, high)
        Per-state box for initial conditions.
    dt : float
    noise : float
        Standard deviation of additive Gaussian measurement noise.
    selection : {"variance", "random"}
        ``"random"`` takes the first candidate (a uniform draw) instead of
        the argmax, giving the equal-budget baseline.
    method : str
        Ensemble method refitted every iteration.
    derivative : str
        Differentiation scheme applied to each segment separately.  The
        fourth-order default keeps the truncation error small on the fast
        transients that start at far-off initial conditions.
    seed : int
    """

    n_candidate_ics: int = 200
    probe_horizon_steps: int = 1
    probe_samples: int = 10
    n_iterations: int = 20
    initial_data_budget: int = 100
    ic_sampling_region: tuple = LORENZ_IC_REGION
    dt: float = 0.01
    noise: float = 0.01
    selection: str = "variance"
    method: str = "bagging"
    derivative: str = "finite_difference_4"
    seed: int = 0

    def __post_init__(self):
        for name in ("n_candidate_ics", "probe_horizon_steps", "initial_data_budget"):
            if int(getattr(self, name)) < 1:
                raise ParameterError(f"{name} must be >= 1")
        if int(self.probe_samples) < 5 or int(self.initial_data_budget) < 5:
            raise ParameterError("probe_samples and initial_data_budget must be >= 5 so segments can be differentiated")
        if int(self.n_iterations) < 0:
            raise ParameterError("n_iterations must be >= 0")
        region = tuple(tuple(float(v) for v in b) for b in self.ic_sampling_region)
        if not region or any(len(b) != 2 or not b[0] < b[1] for b in region):
            raise ParameterError("ic_sampling_region must be nonempty (low, high) pairs with low < high")
        object.__setattr__(self, "ic_sampling_region", region)
        if self.selection not in ("variance", "random"):
            raise ParameterError(f"selection must be 'variance' or 'random', got {self.selection!r}")
        if not self.dt > 0 or self.noise < 0:
            raise ParameterError("need dt > 0 and noise >= 0")

    def to_dict(self) -> dict:
        return {
            "n_candidate_ics": self.n_candidate_ics,
            "probe_horizon_steps": self.probe_horizon_steps,
            "probe_samples": self.probe_samples,
            "n_iterations": self.n_iterations,
            "initial_data_budget": self.initial_data_budget,
            "ic_sampling_region": [list(b) for b in self.ic_sampling_region],
            "dt": self.dt,
            "noise": self.noise,
            "selection": self.selection,
            "method": self.method,
            "derivative": self.derivative,
            "seed": self.seed,
        }


def _terminal_states(terms, stack: np.ndarray, ics: np.ndarray, steps: int, dt: float) -> np.ndarray:
    """RK4 end states for every (candidate, member) pair: shape (C, q, n)."""
    x = np.repeat(np.asarray(ics, dtype=float)[:, None, :], stack.shape[0], axis=1)

    def f(s):
        return np.einsum("cqd,qdn->cqn", evaluate_terms(terms, s), stack)

    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(int(steps)):
            k1 = f(x)
            k2 = f(x + 0.5 * dt * k1)
            k3 = f(x + 0.5 * dt * k2)
            k4 = f(x + dt * k3)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def _spread(ends: np.ndarray) -> tuple[np.ndarray, int]:
    """Trace of the population covariance per candidate, diverged members dropped."""
    ok = np.all(np.isfinite(ends) & (np.abs(ends) < DIVERGENCE_BOUND), axis=-1)
    out = np.full(ends.shape[0], np.inf)
    for c in range(ends.shape[0]):
        good = ends[c, ok[c]]
        if len(good):
            out[c] = float(np.sum(good.var(axis=0)))
    return out, int(np.count_nonzero(~ok))


def candidate_variances(result: EnsembleResult, spec: LibrarySpec, ics, horizon_steps: int = 1,
                        dt: float = 0.01) -> np.ndarray:
    """:func:`forecast_variance` for many initial conditions at once."""
    if int(horizon_steps) < 1:
        raise ParameterError("horizon_steps must be >= 1")
    terms = _terms_for(spec, result.state_labels, result.coefficient_stack.shape[1])
    ends = _terminal_states(terms, result.coefficient_stack, np.atleast_2d(ics), horizon_steps, dt)
    var, n_bad = _spread(ends)
    if n_bad:
        warnings.warn(f"{n_bad} member trajectories diverged and were excluded", CoverageWarning, stacklevel=2)
    return var


def forecast_variance(result: EnsembleResult, spec: LibrarySpec, ic, horizon_steps: int = 1,
                      dt: float = 0.01) -> float:
    """Total variance of the members' states after ``horizon_steps`` RK4 steps.

    This is the trace of the population (``1/q``) covariance.  Diverged
    members are excluded; if all diverge the result is ``inf``.
    """
    return float(candidate_variances(result, spec, np.asarray(ic, dtype=float)[None], horizon_steps, dt)[0])


@dataclass(frozen=True, eq=False)
class ActiveStep:
    """One row of the loop history; iteration 0 is the initial fit."""

    iteration: int
    result: EnsembleResult
    chosen_ic: np.ndarray | None
    chosen_index: int | None
    variance_summary: dict
    report: TrialReport
    n_samples: int
    mean_std: float

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "chosen_ic": None if self.chosen_ic is None else self.chosen_ic.tolist(),
            "chosen_index": self.chosen_index,
            "variance_summary": self.variance_summary,
            "n_samples": self.n_samples,
            "mean_coefficient_std": self.mean_std,
            "coefficient_std": self.result.std.tolist(),
            "coefficient_mean": self.result.mean.tolist(),
            "inclusion_probabilities": self.result.inclusion_probabilities.tolist(),
            "aggregated": self.result.aggregated.xi.tolist(),
            "report": self.report.to_dict(),
        }


def _fit(segments, spec, reg, ens, cfg, names, threads):
    thetas, uts = [], []
    for seg in segments:
        thetas.append(build_library(seg, spec).theta)
        uts.append(differentiate(seg, cfg.derivative).values)
    terms = library_terms(spec, len(names), names)
    theta = EvaluatedLibrary(np.vstack(thetas), [t.label for t in terms], spec, tuple(terms))
    return run_ensemble(cfg.method, theta, np.vstack(uts), reg, ens, threads=threads, state_labels=names)


def _measure(system, ic, n, cfg, rng):
    clean = simulate_ode(system, ic, (n - 1) * cfg.dt, cfg.dt)
    vals = clean.values + cfg.noise * rng.standard_normal(clean.values.shape) if cfg.noise else clean.values
    return DataMatrix(vals, cfg.dt, clean.names)


def active_loop(system: SystemDefinition | None = None, cfg: ActiveConfig | None = None,
                reg: RegressionConfig | None = None, ens: EnsembleConfig | None = None,
                *, threads: int = 1, converge_tol: float = 1e-3, converge_window: int = 5) -> list[ActiveStep]:
    """Run the three-step loop: random start, score candidates, sample the best.

    The loop stops after ``cfg.n_iterations`` or once the mean coefficient
    standard deviation changed by less than ``converge_tol`` (relative) in
    each of the last ``converge_window`` iterations.
    """
    system = system or lorenz()
    cfg = cfg or ActiveConfig()
    reg = reg or RegressionConfig()
    if len(cfg.ic_sampling_region) != system.state_dim:
        raise ParameterError("ic_sampling_region must have one interval per state")
    ens = ens or default_ensemble_config(cfg.method, seed=cfg.seed)
    spec = system.library_spec
    names = system.state_names
    lo = np.array([b[0] for b in cfg.ic_sampling_region])
    hi = np.array([b[1] for b in cfg.ic_sampling_region])

    def record(it, res, ic, idx, summary, n):
        rep = TrialReport.from_fit(system.true_coefficients, res.aggregated, (cfg.seed, it), {"iteration": it})
        return ActiveStep(it, res, ic, idx, summary, rep, n, float(res.std.mean()))

    rng0 = member_rng(cfg.seed, _STAGE_INITIAL, 0)
    ic0 = lo + (hi - lo) * rng0.random(system.state_dim)
    segments = [_measure(system, ic0, int(cfg.initial_data_budget), cfg, member_rng(cfg.seed, _STAGE_NOISE, 0))]
    res = _fit(segments, spec, reg, ens, cfg, names, threads)
    history = [record(0, res, None, None, {}, sum(s.m for s in segments))]

    for it in range(1, int(cfg.n_iterations) + 1):
        crng = member_rng(cfg.seed, _STAGE_CANDIDATES, it)
        cands = lo + (hi - lo) * crng.random((int(cfg.n_candidate_ics), system.state_dim))
        var = candidate_variances(res, spec, cands, cfg.probe_horizon_steps, cfg.dt)
        idx = int(np.argmax(var)) if cfg.selection == "variance" else 0
        finite = var[np.isfinite(var)]
        summary = {
            "max": float(var.max()),
            "min": float(var.min()),
            "mean_finite": float(finite.mean()) if finite.size else float("inf"),
            "n_infinite": int(np.count_nonzero(~np.isfinite(var))),
        }
        segments.append(_measure(system, cands[idx], int(cfg.probe_samples), cfg,
                                 member_rng(cfg.seed, _STAGE_NOISE, it)))
        res = _fit(segments, spec, reg, ens, cfg, names, threads)
        history.append(record(it, res, cands[idx], idx, summary, sum(s.m for s in segments)))
        if len(history) > converge_window:
            s = np.array([h.mean_std for h in history[-converge_window - 1:]])
            rel = np.abs(np.diff(s)) / np.maximum(np.abs(s[:-1]), np.finfo(float).tiny)
            if np.all(rel < converge_tol):
                break
    return history


def write_history(path, history: list[ActiveStep], cfg: ActiveConfig) -> None:
    write_json(path, {"config": cfg.to_dict(), "seed": cfg.seed, "history": [h.to_dict() for h in history]})
