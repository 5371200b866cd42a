"""Forward simulation of identified models and ensemble forecasts.

An ensemble forecast repeats ``n_draws`` times: pick ``draw_size`` members of
the coefficient stack without replacement, average them, and integrate the
averaged model.  Pointwise quantiles of the resulting trajectories give the
confidence band; the aggregated model gives the point forecast.
"""

from __future__ import annotations

import csv
import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .differentiation import differentiate
from .ensemble import EnsembleConfig, EnsembleResult, library_bagging, member_rng
from .exceptions import CoverageWarning, DivergenceError, ParameterError, ShapeError, SpecError
from .library import DataMatrix, LibrarySpec, build_library, evaluate_terms, library_terms, polynomial_evaluator
from .regression import CoefficientMatrix, RegressionConfig
from .systems import SystemDefinition, load_hudson_bay, n_samples

__all__ = [
    "model_rhs",
    "ForecastEnsemble",
    "ensemble_forecast",
    "integrate_batch",
    "quantile_bands",
    "rescale_coefficients",
    "HudsonBayResult",
    "hudson_bay_pipeline",
]

_STAGE_FORECAST = 3
DIVERGENCE_BOUND = 1e10


def _terms_for(spec: LibrarySpec, state_labels, n_terms: int):
    if spec.pde_mode:
        raise SpecError("forward simulation needs an ODE library, not a PDE library")
    terms = library_terms(spec, len(state_labels), state_labels)
    if len(terms) != n_terms:
        raise ShapeError(f"coefficients have {n_terms} rows, library has {len(terms)} terms")
    return terms


def model_rhs(xi: CoefficientMatrix, spec: LibrarySpec, name: str = "identified") -> SystemDefinition:
    """The dynamics ``du/dt = theta(u) xi`` as a :class:`SystemDefinition`."""
    terms = _terms_for(spec, xi.state_labels, xi.xi.shape[0])
    labels = tuple(t.label for t in terms)
    if labels != tuple(xi.term_labels):
        raise ShapeError(f"term labels {xi.term_labels} do not match library {labels}")
    coef = xi.xi.copy()
    fast = polynomial_evaluator(terms)

    def rhs(state, control, params):
        if fast is None:
            return evaluate_terms(terms, state, control) @ params["xi"]
        if not spec.control_inputs:
            return fast(state) @ params["xi"]
        c = np.asarray(0.0 if control is None else control, dtype=float)
        if c.ndim == state.ndim - 1:
            c = c[..., None]
        return fast(state, c) @ params["xi"]

    return SystemDefinition(
        name, len(xi.state_labels), rhs, {"xi": coef}, spec, xi, (), tuple(xi.state_labels), spec.control_inputs
    )


def integrate_batch(terms, xis: np.ndarray, u0, T: float, dt: float, control=None, bound: float = DIVERGENCE_BOUND):
    """RK4 for a batch of models ``xis`` (B, D, n) from a common ``u0``.

    Returns ``(trajectories, diverged_at)``: trajectories has shape (B, m, n)
    with NaN after divergence; ``diverged_at[b]`` is the first non-finite (or
    out-of-bound) sample index, or ``m`` when the trajectory stays finite.
    """
    xis = np.asarray(xis, dtype=float)
    B, _, n = xis.shape
    m = n_samples(T, dt)
    x0 = np.asarray(u0, dtype=float)
    if x0.shape != (n,):
        raise ShapeError(f"initial condition has shape {x0.shape}, expected ({n},)")
    ctrl = None
    if control is not None:
        ctrl = np.asarray(control, dtype=float)
        if ctrl.ndim == 1:
            ctrl = ctrl[:, None]
        if ctrl.shape[0] < m - 1:
            raise ParameterError(f"control has {ctrl.shape[0]} rows, need {m - 1}")

    def f(x, c):
        theta = evaluate_terms(terms, x, None if c is None else np.broadcast_to(c, x.shape[:-1] + c.shape))
        return np.einsum("bd,bdn->bn", theta, xis)

    out = np.full((B, m, n), np.nan)
    out[:, 0] = x0
    x = np.repeat(x0[None], B, axis=0)
    alive = np.ones(B, dtype=bool)
    diverged_at = np.full(B, m)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(m - 1):
            c = None if ctrl is None else ctrl[k]
            k1 = f(x, c)
            k2 = f(x + 0.5 * dt * k1, c)
            k3 = f(x + 0.5 * dt * k2, c)
            k4 = f(x + dt * k3, c)
            x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            bad = alive & ~np.all(np.isfinite(x) & (np.abs(x) < bound), axis=1)
            if bad.any():
                diverged_at[bad] = k + 1
                alive &= ~bad
            # frozen rows keep a finite dummy state so the batch stays warning-free
            x[~alive] = 0.0
            out[alive, k + 1] = x[alive]
    return out, diverged_at


def quantile_bands(trajectories: np.ndarray, coverage: float):
    """Pointwise (lower, median, upper) over axis 0, ignoring NaN.

    Uses linear interpolation between order statistics at levels
    ``(1 - coverage) / 2``, ``0.5`` and ``(1 + coverage) / 2``.
    """
    if not 0.0 < coverage < 1.0:
        raise ParameterError(f"coverage must be in (0, 1), got {coverage}")
    levels = [(1 - coverage) / 2, 0.5, (1 + coverage) / 2]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        q = np.nanquantile(trajectories, levels, axis=0, method="linear")
    return q[0], q[1], q[2]


@dataclass(frozen=True, eq=False)
class ForecastEnsemble:
    """Ensemble trajectories, their pointwise bands and the point forecast.

    ``trajectories`` has shape (n_draws, m, n) with NaN after divergence;
    ``lower``, ``median`` and ``upper`` have shape (m, n).
    """

    times: np.ndarray
    trajectories: np.ndarray
    lower: np.ndarray
    median: np.ndarray
    upper: np.ndarray
    point_forecast: DataMatrix
    coverage: float
    draws: np.ndarray
    diverged_at: np.ndarray
    state_labels: tuple[str, ...]
    config: dict = field(default_factory=dict)

    @property
    def n_valid(self) -> np.ndarray:
        """Number of draws contributing to the bands at each sample."""
        return np.count_nonzero(np.isfinite(self.trajectories[:, :, 0]), axis=0)

    def rows(self):
        point = self.point_forecast.values
        for k, t in enumerate(self.times):
            row = [t]
            for i in range(len(self.state_labels)):
                row += [point[k, i], self.lower[k, i], self.median[k, i], self.upper[k, i]]
            yield row

    def header(self) -> list[str]:
        cols = ["t"]
        for s in self.state_labels:
            cols += [f"{s}_point", f"{s}_lower", f"{s}_median", f"{s}_upper"]
        return cols

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.header())
            for row in self.rows():
                w.writerow([f"{v:.17g}" for v in row])


def _seed_of(rng) -> int:
    if rng is None:
        return 0
    if isinstance(rng, np.random.Generator):
        return int(rng.integers(0, 2**63 - 1))
    return int(rng)


def ensemble_forecast(
    result: EnsembleResult,
    spec: LibrarySpec,
    u0,
    T: float,
    dt: float,
    n_draws: int = 1000,
    draw_size: int = 5,
    coverage: float = 0.95,
    rng=None,
    control=None,
    t0: float = 0.0,
) -> ForecastEnsemble:
    """Probabilistic forecast from an ensemble by draw-and-average.

    Parameters
    ----------
    result : EnsembleResult
    spec : LibrarySpec
        Library the coefficients refer to.
    u0 : array_like
        Initial state.
    T, dt : float
        Horizon and RK4 step.
    n_draws, draw_size : int
        Number of averaged models and stack members per average.
    coverage : float
        Central probability of the band.
    rng : int or Generator, optional
        Draw ``k`` uses its own stream spawned from this seed, so the
        result does not depend on evaluation order.

    Divergent draws are truncated where they blow up and left out of the
    bands from then on; a :class:`CoverageWarning` reports how many.
    """
    if not 0.0 < coverage < 1.0:
        raise ParameterError(f"coverage must be in (0, 1), got {coverage}")
    q = result.n_models
    if not 1 <= int(draw_size) <= q:
        raise ParameterError(f"draw_size must be in [1, {q}], got {draw_size}")
    if int(n_draws) < 1:
        raise ParameterError(f"n_draws must be >= 1, got {n_draws}")
    terms = _terms_for(spec, result.state_labels, result.coefficient_stack.shape[1])
    seed = _seed_of(rng)
    draws = np.array([
        member_rng(seed, _STAGE_FORECAST, k).choice(q, int(draw_size), replace=False) for k in range(int(n_draws))
    ])
    xis = result.coefficient_stack[draws].mean(axis=1)
    traj, diverged_at = integrate_batch(terms, xis, u0, T, dt, control)
    n_bad = int(np.count_nonzero(diverged_at < traj.shape[1]))
    if n_bad:
        warnings.warn(
            f"{n_bad} of {n_draws} forecast draws diverged; bands after the first divergence use fewer draws",
            CoverageWarning,
            stacklevel=2,
        )
    lower, median, upper = quantile_bands(traj, coverage)

    point, p_div = integrate_batch(terms, result.aggregated.xi[None], u0, T, dt, control)
    if p_div[0] < point.shape[1]:
        raise DivergenceError(f"aggregated model diverged at step {p_div[0]}", step=int(p_div[0]))
    times = t0 + dt * np.arange(traj.shape[1])
    return ForecastEnsemble(
        times=times,
        trajectories=traj,
        lower=lower,
        median=median,
        upper=upper,
        point_forecast=DataMatrix(point[0], dt, result.state_labels, t0=t0),
        coverage=float(coverage),
        draws=draws,
        diverged_at=diverged_at,
        state_labels=tuple(result.state_labels),
        config={"n_draws": int(n_draws), "draw_size": int(draw_size), "coverage": float(coverage),
                "T": float(T), "dt": float(dt), "u0": [float(v) for v in np.ravel(u0)], "seed": seed},
    )


def rescale_coefficients(xi: np.ndarray, spec: LibrarySpec, n_states: int, scale: float) -> np.ndarray:
    """Map coefficients fitted on ``u / scale`` back to the units of ``u``.

    A monomial of total degree ``k`` picks up the factor ``scale**(1 - k)``.
    Only polynomial libraries are supported.
    """
    terms = library_terms(spec, n_states)
    if any(t.kind != "poly" for t in terms) or spec.control_inputs:
        raise SpecError("rescaling is defined for state-only polynomial libraries")
    factors = np.array([float(scale) ** (1 - t.degree) for t in terms])
    return np.asarray(xi, dtype=float) * factors[:, None]


@dataclass(frozen=True, eq=False)
class HudsonBayResult:
    """Output of :func:`hudson_bay_pipeline`.

    ``ensemble`` lives in the rescaled units ``u / scale``; ``coefficients``
    and ``forecast`` are in thousands of pelts.
    """

    data: DataMatrix
    scale: float
    spec: LibrarySpec
    ensemble: EnsembleResult
    coefficients: CoefficientMatrix
    forecast: ForecastEnsemble | None
    elapsed: float
    config: dict

    def identified_terms(self) -> dict[str, list[str]]:
        sup = self.coefficients.support
        return {s: [t for d, t in enumerate(self.coefficients.term_labels) if sup[d, i]]
                for i, s in enumerate(self.coefficients.state_labels)}


def hudson_bay_pipeline(
    data: DataMatrix | None = None,
    lambda1: float = 0.2,
    ip_threshold: float = 0.4,
    n_models: int = 100,
    library_fraction: float = 0.6,
    seed: int = 0,
    derivative: str = "finite_difference",
    forecast: bool = True,
    n_draws: int = 1000,
    draw_size: int = 5,
    coverage: float = 0.95,
    threads: int = 1,
) -> HudsonBayResult:
    """Library bagging on the lynx-hare pelt series plus a reconstruction band.

    The counts are divided by their overall RMS before fitting so that the
    threshold ``lambda1`` acts on order-one coefficients; one common factor
    keeps the predator-prey term structure intact.  The library holds the
    degree-two monomials without a constant.
    """
    start = time.perf_counter()
    data = load_hudson_bay() if data is None else data
    scale = float(np.sqrt(np.mean(data.values**2)))
    scaled = DataMatrix(data.values / scale, data.dt, data.names, t0=data.t0)
    spec = LibrarySpec(polynomial_degree=2, include_constant=False)
    theta = build_library(scaled, spec)
    ut = differentiate(scaled, derivative)
    reg = RegressionConfig(lambda1=lambda1)
    ens = EnsembleConfig(n_models=n_models, ip_threshold=ip_threshold, library_fraction=library_fraction, seed=seed)
    res = library_bagging(theta, ut, reg, ens, threads=threads, state_labels=data.names)
    xi = rescale_coefficients(res.aggregated.xi, spec, data.n, scale)
    coefs = CoefficientMatrix(xi, res.term_labels, res.state_labels)
    fc = None
    if forecast:
        T = (data.m - 1) * data.dt
        dt = data.dt / 10
        scaled_fc = ensemble_forecast(res, spec, scaled.values[0], T, dt, n_draws, draw_size, coverage, seed,
                                      t0=data.t0)
        # bands are recomputed in pelt units so they are exact quantiles of the stored draws
        traj = scaled_fc.trajectories * scale
        lower, median, upper = quantile_bands(traj, coverage)
        fc = ForecastEnsemble(
            times=scaled_fc.times,
            trajectories=traj,
            lower=lower,
            median=median,
            upper=upper,
            point_forecast=DataMatrix(scaled_fc.point_forecast.values * scale, dt, data.names, t0=data.t0),
            coverage=scaled_fc.coverage,
            draws=scaled_fc.draws,
            diverged_at=scaled_fc.diverged_at,
            state_labels=scaled_fc.state_labels,
            config=scaled_fc.config,
        )
    config = {
        "lambda1": lambda1, "ip_threshold": ip_threshold, "n_models": n_models,
        "library_fraction": library_fraction, "seed": seed, "derivative": derivative,
        "scale": scale, "library": spec.to_dict(),
    }
    return HudsonBayResult(data, scale, spec, res, coefs, fc, time.perf_counter() - start, config)
