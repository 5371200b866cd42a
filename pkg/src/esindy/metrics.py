"""Model-quality metrics and the noise / data-length sweep."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .ensemble import ENSEMBLE_METHODS, _map, default_ensemble_config, identify
from .exceptions import EsindyError, ParameterError, ShapeError, UndefinedMetricError
from .io import write_csv, write_json
from .regression import CoefficientMatrix, RegressionConfig
from .systems import LORENZ_U0, NOISE_MODES, add_noise, lorenz, simulate_ode

__all__ = [
    "coefficient_error",
    "support_success",
    "success_rate",
    "TrialReport",
    "SweepGrid",
    "SweepReport",
    "sweep",
    "trial_seed",
    "SWEEP_METHODS",
]

SWEEP_METHODS = ("sindy",) + ENSEMBLE_METHODS


def _xi(a) -> np.ndarray:
    return a.xi if isinstance(a, CoefficientMatrix) else np.asarray(a, dtype=float)


def coefficient_error(true_xi, identified_xi) -> float:
    """Relative Frobenius error ``||xi - xi_hat|| / ||xi||``."""
    t, h = _xi(true_xi), _xi(identified_xi)
    if t.shape != h.shape:
        raise ShapeError(f"true {t.shape} vs identified {h.shape}")
    ref = np.linalg.norm(t)
    if ref == 0:
        raise UndefinedMetricError("coefficient error is undefined for an all-zero reference")
    return float(np.linalg.norm(t - h) / ref)


def support_success(true_xi, identified_xi) -> bool:
    """True when the zero / nonzero patterns agree entry by entry."""
    t, h = _xi(true_xi), _xi(identified_xi)
    if t.shape != h.shape:
        raise ShapeError(f"true {t.shape} vs identified {h.shape}")
    return bool(np.array_equal(t != 0, h != 0))


def success_rate(outcomes) -> float:
    outcomes = np.asarray(list(outcomes), dtype=bool)
    if outcomes.size == 0:
        raise ParameterError("no outcomes")
    return float(outcomes.mean())


@dataclass(frozen=True)
class TrialReport:
    """Outcome of one identification run.

    ``coefficient_error`` is NaN and ``error`` is set when the run failed.
    """

    success: bool
    coefficient_error: float
    identified_support: tuple[tuple[str, str], ...]
    seed: tuple[int, ...]
    config: dict = field(default_factory=dict)
    error: str = ""

    def __post_init__(self):
        if not (np.isnan(self.coefficient_error) or self.coefficient_error >= 0):
            raise ParameterError("coefficient_error must be non-negative")

    @classmethod
    def from_fit(cls, true_xi: CoefficientMatrix, fitted: CoefficientMatrix, seed, config=None) -> "TrialReport":
        sup = tuple((fitted.term_labels[d], fitted.state_labels[i]) for d, i in zip(*np.nonzero(fitted.xi)))
        return cls(support_success(true_xi, fitted), coefficient_error(true_xi, fitted), sup, tuple(seed),
                   dict(config or {}))

    def to_dict(self) -> dict:
        return {
            "success": self.success,
            "coefficient_error": self.coefficient_error,
            "identified_support": [list(p) for p in self.identified_support],
            "seed": list(self.seed),
            "config": self.config,
            "error": self.error,
        }


@dataclass(frozen=True)
class SweepGrid:
    """Noise levels x trajectory durations x methods."""

    noise_levels: tuple[float, ...] = (0.025,)
    durations: tuple[float, ...] = (10.0,)
    methods: tuple[str, ...] = SWEEP_METHODS

    def __post_init__(self):
        object.__setattr__(self, "noise_levels", tuple(float(v) for v in self.noise_levels))
        object.__setattr__(self, "durations", tuple(float(v) for v in self.durations))
        object.__setattr__(self, "methods", tuple(m.replace("-", "_") for m in self.methods))
        if not (self.noise_levels and self.durations and self.methods):
            raise ParameterError("sweep grid must be nonempty")
        bad = [m for m in self.methods if m not in SWEEP_METHODS]
        if bad:
            raise ParameterError(f"unknown methods {bad}; choose from {SWEEP_METHODS}")

    def to_dict(self) -> dict:
        return {"noise_levels": list(self.noise_levels), "durations": list(self.durations),
                "methods": list(self.methods)}


def trial_seed(seed: int, noise_index: int, length_index: int, trial: int) -> np.random.SeedSequence:
    """Noise stream of one realisation; shared by every method in the cell."""
    return np.random.SeedSequence(int(seed), spawn_key=(int(noise_index), int(length_index), int(trial)))


@dataclass(frozen=True, eq=False)
class SweepReport:
    """Per-trial reports and the per-cell summary table."""

    trials: tuple[dict, ...]
    table: tuple[dict, ...]
    config: dict

    def cell(self, noise: float, duration: float, method: str) -> dict:
        for row in self.table:
            if row["noise"] == noise and row["duration"] == duration and row["method"] == method:
                return row
        raise KeyError((noise, duration, method))

    def to_dict(self) -> dict:
        return {"config": self.config, "table": list(self.table), "trials": list(self.trials)}

    def write(self, stem) -> None:
        """``<stem>.csv`` (one row per cell) and ``<stem>.json`` (everything)."""
        header = ["noise", "duration", "method", "n_trials", "success_rate", "mean_coefficient_error", "n_failed"]
        write_csv(f"{stem}.csv", header, [[row[h] for h in header] for row in self.table])
        write_json(f"{stem}.json", self.to_dict())


def sweep(
    grid: SweepGrid,
    n_realizations: int = 100,
    seed: int = 0,
    *,
    dt: float = 0.01,
    lambda1: float = 0.2,
    n_models: int = 100,
    noise_mode: str = "percent_rms",
    derivative: str = "finite_difference",
    u0=LORENZ_U0,
    threads: int = 1,
    order=None,
) -> SweepReport:
    """Lorenz identification statistics over a grid of noise levels and durations.

    For each (noise, duration) cell and each realisation one noisy trajectory
    is generated from :func:`trial_seed`; every method sees that same data.
    Ensemble members draw from ``seed`` as well, so the table is a pure
    function of the arguments.  ``order`` permutes the trial evaluation
    sequence (for testing); it does not change the result.
    """
    if int(n_realizations) < 1:
        raise ParameterError("n_realizations must be >= 1")
    if noise_mode not in NOISE_MODES:
        raise ParameterError(f"unknown noise mode {noise_mode!r}")
    system = lorenz()
    spec = system.library_spec
    reg = RegressionConfig(lambda1=lambda1)
    clean = {T: simulate_ode(system, u0, T, dt) for T in grid.durations}

    jobs = list(product(range(len(grid.noise_levels)), range(len(grid.durations)), range(int(n_realizations))))
    if order is not None:
        jobs = [jobs[i] for i in order]

    def run(job):
        a, b, k = job
        noise, T = grid.noise_levels[a], grid.durations[b]
        ss = trial_seed(seed, a, b, k)
        data = add_noise(clean[T], noise, np.random.default_rng(ss), noise_mode)
        out = []
        for method in grid.methods:
            cfg = {"noise": noise, "duration": T, "method": method, "trial": k}
            ens = default_ensemble_config(method, n_models=n_models, seed=int(ss.generate_state(1)[0]))
            try:
                xi, _ = identify(method, data, spec, reg, ens, derivative=derivative)
                rep = TrialReport.from_fit(system.true_coefficients, xi, (seed, a, b, k), cfg)
            except (EsindyError, np.linalg.LinAlgError) as exc:
                rep = TrialReport(False, float("nan"), (), (seed, a, b, k), cfg, f"{type(exc).__name__}: {exc}")
            out.append(rep.to_dict())
        return out

    results = [r for chunk in _map(run, jobs, threads) for r in chunk]
    results.sort(key=lambda r: (r["seed"][1], r["seed"][2], r["seed"][3], grid.methods.index(r["config"]["method"])))

    table = []
    for (a, noise), (b, T), method in product(enumerate(grid.noise_levels), enumerate(grid.durations), grid.methods):
        rows = [r for r in results if r["seed"][1] == a and r["seed"][2] == b and r["config"]["method"] == method]
        errs = [r["coefficient_error"] for r in rows if not r["error"]]
        table.append({
            "noise": noise,
            "duration": T,
            "method": method,
            "n_trials": len(rows),
            "success_rate": success_rate(r["success"] for r in rows),
            "mean_coefficient_error": float(np.mean(errs)) if errs else float("nan"),
            "n_failed": sum(1 for r in rows if r["error"]),
        })
    config = {
        "grid": grid.to_dict(), "n_realizations": int(n_realizations), "seed": int(seed), "dt": dt,
        "lambda1": lambda1, "n_models": n_models, "noise_mode": noise_mode, "derivative": derivative,
        "u0": [float(v) for v in u0], "library": spec.to_dict(),
    }
    return SweepReport(tuple(results), tuple(table), config)
