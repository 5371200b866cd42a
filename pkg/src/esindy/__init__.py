"""Ensemble sparse identification of nonlinear dynamics.

Quick start::

    from esindy import lorenz, simulate_ode, LORENZ_U0, identify, RegressionConfig
    sys_ = lorenz()
    data = simulate_ode(sys_, LORENZ_U0, 10.0, 0.01)
    xi, result = identify("bagging", data, sys_.library_spec, RegressionConfig(lambda1=0.2))
    print("\\n".join(xi.equations()))
"""

from .active import ActiveConfig, ActiveStep, active_loop, candidate_variances, forecast_variance
from .differentiation import DerivativeMatrix, differentiate, finite_difference_time, smoothed_difference
from .ensemble import (
    ENSEMBLE_METHODS,
    EnsembleConfig,
    EnsembleResult,
    bagging,
    bootstrap_rows,
    bragging,
    default_ensemble_config,
    identify,
    inclusion_probabilities,
    library_bagging,
    run_ensemble,
    stability_selection,
)
from .exceptions import (
    ConfigError,
    ConvergenceWarning,
    CoverageWarning,
    DivergenceError,
    EsindyError,
    EsindyWarning,
    IngestionError,
    InputError,
    InsufficientDataError,
    NumericalError,
    ParameterError,
    ShapeError,
    SpecError,
    UndefinedMetricError,
)
from .forecasting import (
    ForecastEnsemble,
    HudsonBayResult,
    ensemble_forecast,
    hudson_bay_pipeline,
    model_rhs,
    quantile_bands,
)
from .library import DataMatrix, EvaluatedLibrary, LibrarySpec, Term, build_library, library_terms
from .metrics import SweepGrid, SweepReport, TrialReport, coefficient_error, success_rate, support_success, sweep
from .mpc import MpcConfig, MpcExperiment, closed_loop, mpc_step, run_mpc_experiment
from .regression import CoefficientMatrix, RegressionConfig, ridge_solve, sparsify_dynamics
from .systems import (
    LORENZ_U0,
    SystemDefinition,
    add_noise,
    forced_lorenz,
    load_hudson_bay,
    lorenz,
    lotka_volterra,
    simulate_ode,
    simulate_pde,
)
from .weak import WeakConfig, WeakSystem, assemble_weak_system, discover_pde, weak_fit

__version__ = "0.1.0"

__all__ = [
    "ActiveConfig", "ActiveStep", "active_loop", "candidate_variances", "forecast_variance",
    "DerivativeMatrix", "differentiate", "finite_difference_time", "smoothed_difference",
    "ENSEMBLE_METHODS", "EnsembleConfig", "EnsembleResult", "bagging", "bootstrap_rows", "bragging",
    "default_ensemble_config", "identify", "inclusion_probabilities", "library_bagging", "run_ensemble",
    "stability_selection",
    "ConfigError", "ConvergenceWarning", "CoverageWarning", "DivergenceError", "EsindyError", "EsindyWarning",
    "IngestionError", "InputError", "InsufficientDataError", "NumericalError", "ParameterError", "ShapeError",
    "SpecError", "UndefinedMetricError",
    "ForecastEnsemble", "HudsonBayResult", "ensemble_forecast", "hudson_bay_pipeline", "model_rhs", "quantile_bands",
    "DataMatrix", "EvaluatedLibrary", "LibrarySpec", "Term", "build_library", "library_terms",
    "SweepGrid", "SweepReport", "TrialReport", "coefficient_error", "success_rate", "support_success", "sweep",
    "MpcConfig", "MpcExperiment", "closed_loop", "mpc_step", "run_mpc_experiment",
    "CoefficientMatrix", "RegressionConfig", "ridge_solve", "sparsify_dynamics",
    "LORENZ_U0", "SystemDefinition", "add_noise", "forced_lorenz", "load_hudson_bay", "lorenz", "lotka_volterra",
    "simulate_ode", "simulate_pde",
    "WeakConfig", "WeakSystem", "assemble_weak_system", "discover_pde", "weak_fit",
]
