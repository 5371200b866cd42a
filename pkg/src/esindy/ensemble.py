"""Ensemble SINDy: bagging, bragging, library bagging and stability selection.

Every ensemble member draws its randomness from its own stream, spawned
from the master seed by ``(stage, member index)``.  Members can therefore be
fitted in any order or on any number of threads with identical results.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, ShapeError
from .differentiation import differentiate
from .library import EvaluatedLibrary, build_library, default_state_names
from .regression import CoefficientMatrix, RegressionConfig, sparsify_dynamics, stls_columns

__all__ = [
    "EnsembleConfig",
    "EnsembleResult",
    "member_rng",
    "bootstrap_rows",
    "inclusion_probabilities",
    "threshold_by_ip",
    "bagging",
    "bragging",
    "library_bagging",
    "stability_selection",
    "run_ensemble",
    "ENSEMBLE_METHODS",
    "default_ensemble_config",
    "identify",
]

ENSEMBLE_METHODS = ("bagging", "bragging", "library_bagging", "stability_selection")

_STAGE_BOOTSTRAP = 0
_STAGE_LIBRARY = 1
_STAGE_STABILITY = 2


@dataclass(frozen=True)
class EnsembleConfig:
    """Ensemble size, aggregation rule and inclusion-probability threshold.

    Defaults follow the Lorenz sensitivity protocol: 100 models, threshold
    0.6 for b(r)agging.  Use ``ip_threshold=0.4`` for library bagging.
    """

    n_models: int = 100
    aggregation: str = "mean"
    ip_threshold: float = 0.6
    library_fraction: float = 0.6
    seed: int = 0

    def __post_init__(self):
        if int(self.n_models) < 1:
            raise ParameterError(f"n_models must be >= 1, got {self.n_models}")
        if self.aggregation not in ("mean", "median"):
            raise ParameterError(f"aggregation must be 'mean' or 'median', got {self.aggregation!r}")
        if not 0.0 <= self.ip_threshold <= 1.0:
            raise ParameterError(f"ip_threshold must be in [0, 1], got {self.ip_threshold}")
        if not 0.0 < self.library_fraction <= 1.0:
            raise ParameterError(f"library_fraction must be in (0, 1], got {self.library_fraction}")

    def to_dict(self) -> dict:
        return {
            "n_models": self.n_models,
            "aggregation": self.aggregation,
            "ip_threshold": self.ip_threshold,
            "library_fraction": self.library_fraction,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class EnsembleResult:
    """Stack of member coefficient matrices and their summary.

    Attributes
    ----------
    coefficient_stack : ndarray, shape (q, D, n)
    candidacy : ndarray of bool, shape (q, D, n)
        Whether term ``d`` was available to member ``b`` for state ``i``.
    inclusion_probabilities : ndarray, shape (D, n)
    aggregated : CoefficientMatrix
        Mean or median of the stack with low-ip entries zeroed.
    unthresholded : ndarray, shape (D, n)
        The aggregate before ip thresholding.
    mean, median, std : ndarray, shape (D, n)
        Per-coefficient statistics over the full stack, zeros included.
    never_candidate : ndarray of bool, shape (D, n)
        Entries whose ip is 0 by convention because no member could use them.
    """

    coefficient_stack: np.ndarray
    candidacy: np.ndarray
    inclusion_probabilities: np.ndarray
    aggregated: CoefficientMatrix
    unthresholded: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    std: np.ndarray
    never_candidate: np.ndarray
    method: str
    regression: dict = field(default_factory=dict)
    ensemble: dict = field(default_factory=dict)
    library_stage: dict | None = None

    @property
    def n_models(self) -> int:
        return self.coefficient_stack.shape[0]

    @property
    def term_labels(self):
        return self.aggregated.term_labels

    @property
    def state_labels(self):
        return self.aggregated.state_labels

    @property
    def seed(self):
        return self.ensemble.get("seed")

    def to_dict(self, include_stack: bool = False) -> dict:
        out = {
            "method": self.method,
            "seed": self.seed,
            "term_labels": list(self.term_labels),
            "state_labels": list(self.state_labels),
            "inclusion_probabilities": self.inclusion_probabilities.tolist(),
            "aggregated": self.aggregated.xi.tolist(),
            "unthresholded": self.unthresholded.tolist(),
            "statistics": {"mean": self.mean.tolist(), "median": self.median.tolist(), "std": self.std.tolist()},
            "config": {"regression": self.regression, "ensemble": self.ensemble},
        }
        if self.library_stage is not None:
            out["library_stage"] = {
                k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.library_stage.items()
            }
        if include_stack:
            out["coefficient_stack"] = self.coefficient_stack.tolist()
            out["candidacy"] = self.candidacy.tolist()
        return out

    def to_json(self, include_stack: bool = False, **kwargs) -> str:
        return json.dumps(self.to_dict(include_stack), **kwargs)

    @classmethod
    def from_dict(cls, d: dict) -> "EnsembleResult":
        if "coefficient_stack" not in d:
            raise ShapeError("serialized result lacks the coefficient stack")
        stack = np.array(d["coefficient_stack"], dtype=float)
        cand = np.array(d["candidacy"], dtype=bool)
        stats = d["statistics"]
        lib = d.get("library_stage")
        if lib is not None:
            lib = {k: (np.array(v) if isinstance(v, list) else v) for k, v in lib.items()}
        ip = np.array(d["inclusion_probabilities"], dtype=float)
        return cls(
            coefficient_stack=stack,
            candidacy=cand,
            inclusion_probabilities=ip,
            aggregated=CoefficientMatrix(np.array(d["aggregated"]), d["term_labels"], d["state_labels"]),
            unthresholded=np.array(d["unthresholded"], dtype=float),
            mean=np.array(stats["mean"]),
            median=np.array(stats["median"]),
            std=np.array(stats["std"]),
            never_candidate=~cand.any(axis=0),
            method=d["method"],
            regression=d["config"]["regression"],
            ensemble=d["config"]["ensemble"],
            library_stage=lib,
        )


def member_rng(seed: int, stage: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(stage, index)))


def bootstrap_rows(m: int, rng) -> np.ndarray:
    """``m`` row indices drawn uniformly with replacement."""
    if int(m) < 1:
        raise ParameterError(f"m must be >= 1, got {m}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return rng.integers(0, int(m), size=int(m))


def inclusion_probabilities(stack, candidacy_mask=None) -> np.ndarray:
    """Fraction of candidate members in which each coefficient is nonzero.

    ``candidacy_mask`` may be ``(q, D)`` or ``(q, D, n)``; ``None`` means every
    term was a candidate in every member.  Entries that were never a
    candidate get probability 0.
    """
    stack = np.asarray(stack, dtype=float)
    if stack.ndim != 3 or stack.shape[0] == 0:
        raise ShapeError("stack must be a nonempty (q, D, n) array")
    if candidacy_mask is None:
        return np.count_nonzero(stack, axis=0) / stack.shape[0]
    cand = np.asarray(candidacy_mask, dtype=bool)
    if cand.ndim == 2:
        cand = np.repeat(cand[:, :, None], stack.shape[2], axis=2)
    if cand.shape != stack.shape:
        raise ShapeError(f"candidacy shape {cand.shape} does not match stack {stack.shape}")
    hits = np.count_nonzero((stack != 0) & cand, axis=0)
    trials = cand.sum(axis=0)
    ip = np.zeros(stack.shape[1:])
    np.divide(hits, trials, out=ip, where=trials > 0)
    return ip


def threshold_by_ip(xi, ip, tol: float):
    """Zero the entries of ``xi`` whose inclusion probability is below ``tol``."""
    ip = np.asarray(ip, dtype=float)
    arr = xi.xi if isinstance(xi, CoefficientMatrix) else np.asarray(xi, dtype=float)
    if arr.shape != ip.shape:
        raise ShapeError(f"coefficients {arr.shape} vs ip {ip.shape}")
    out = np.where(ip < tol, 0.0, arr)
    if isinstance(xi, CoefficientMatrix):
        return CoefficientMatrix(out, xi.term_labels, xi.state_labels)
    return out


def _arrays(theta, ut):
    A = theta.theta if isinstance(theta, EvaluatedLibrary) else np.asarray(theta, dtype=float)
    b = np.asarray(getattr(ut, "values", ut), dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if A.ndim != 2 or A.shape[0] != b.shape[0]:
        raise ShapeError(f"library {A.shape} and derivatives {b.shape} do not match")
    labels = theta.term_labels if isinstance(theta, EvaluatedLibrary) else tuple(f"f{d}" for d in range(A.shape[1]))
    return A, b, labels


def _fit_member(A, b, reg, rows, cand):
    """Thresholded regression for one member; degenerate fits give zeros."""
    Ab = A if rows is None else A[rows]
    bb = b if rows is None else b[rows]
    D, n = A.shape[1], b.shape[1]
    xi = np.zeros((D, n))
    try:
        for i in range(n):
            xi[:, i], _ = stls_columns(Ab, bb[:, i], reg, None if cand is None else cand[:, i])
    except (np.linalg.LinAlgError, ValueError):
        return np.zeros((D, n))
    if not np.all(np.isfinite(xi)):
        return np.zeros((D, n))
    return xi


def _map(fn, items, threads: int):
    if threads is None or threads <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, items))


def _summarize(stack, cand, aggregation, tol, labels, state_labels, method, reg, ens, library_stage=None):
    ip = inclusion_probabilities(stack, cand)
    mean = stack.mean(axis=0)
    median = np.median(stack, axis=0)
    std = stack.std(axis=0)
    agg = mean if aggregation == "mean" else median
    final = np.where(ip < tol, 0.0, agg)
    return EnsembleResult(
        coefficient_stack=stack,
        candidacy=cand,
        inclusion_probabilities=ip,
        aggregated=CoefficientMatrix(final, labels, state_labels),
        unthresholded=agg,
        mean=mean,
        median=median,
        std=std,
        never_candidate=~cand.any(axis=0),
        method=method,
        regression=reg.to_dict(),
        ensemble=ens.to_dict(),
        library_stage=library_stage,
    )


def _bootstrap_ensemble(
    theta, ut, reg, ens, aggregation, method, threads=1, bootstraps=None, candidates=None, state_labels=None
) -> EnsembleResult:
    A, b, labels = _arrays(theta, ut)
    m, D = A.shape
    n = b.shape[1]
    cand = np.ones((D, n), dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool)
    if cand.ndim == 1:
        cand = np.repeat(cand[:, None], n, axis=1)
    if bootstraps is not None:
        row_sets = [np.asarray(r, dtype=int) for r in bootstraps]
        if len(row_sets) == 0:
            raise ParameterError("bootstraps must be nonempty")
    else:
        q = int(ens.n_models)
        row_sets = [bootstrap_rows(m, member_rng(ens.seed, _STAGE_BOOTSTRAP, k)) for k in range(q)]
    stack = np.array(_map(lambda rows: _fit_member(A, b, reg, rows, cand), row_sets, threads))
    cand_stack = np.broadcast_to(cand, stack.shape).copy()
    state_labels = tuple(state_labels) if state_labels else default_state_names(n)
    return _summarize(stack, cand_stack, aggregation, ens.ip_threshold, labels, state_labels, method, reg, ens)


def bagging(theta, ut, reg: RegressionConfig, ens: EnsembleConfig, *, threads: int = 1, bootstraps=None,
            candidates=None, state_labels=None) -> EnsembleResult:
    """Bootstrap rows, fit every member, average (mean) and threshold by ip.

    ``bootstraps`` overrides the random row draws with explicit index arrays.
    ``candidates`` (``D`` or ``D x n`` booleans) restricts the library per state.
    """
    return _bootstrap_ensemble(theta, ut, reg, ens, "mean", "bagging", threads, bootstraps, candidates, state_labels)


def bragging(theta, ut, reg: RegressionConfig, ens: EnsembleConfig, *, threads: int = 1, bootstraps=None,
             candidates=None, state_labels=None) -> EnsembleResult:
    """Bagging with the median as aggregate (average of the two central values for even q)."""
    return _bootstrap_ensemble(theta, ut, reg, ens, "median", "bragging", threads, bootstraps, candidates, state_labels)


def library_bagging(theta, ut, reg: RegressionConfig, ens: EnsembleConfig, *, threads: int = 1,
                    state_labels=None) -> EnsembleResult:
    """Library bagging followed by bagging on the retained terms.

    Each of the ``q`` library-stage members regresses on all rows against
    ``l = round(library_fraction * D)`` distinct columns.  Inclusion
    probabilities are conditional on candidacy: a term's count is divided by
    the number of members whose sub-library contained it.  For each state,
    terms with ``ip >= tol`` survive and a bootstrap ensemble (aggregated by
    ``ens.aggregation``) is fitted on them; that result is returned, with
    the library-stage statistics in ``library_stage``.
    """
    A, b, labels = _arrays(theta, ut)
    D, n = A.shape[1], b.shape[1]
    ell = int(round(ens.library_fraction * D))
    if ell < 1:
        raise ParameterError(f"library_fraction * D = {ens.library_fraction * D:.3g} selects no terms")
    if ell > D:
        raise ParameterError(f"cannot sample {ell} of {D} library terms")
    q = int(ens.n_models)
    col_sets = [np.sort(member_rng(ens.seed, _STAGE_LIBRARY, k).choice(D, ell, replace=False)) for k in range(q)]

    def fit(cols):
        mask = np.zeros(D, dtype=bool)
        mask[cols] = True
        cand = np.repeat(mask[:, None], n, axis=1)
        return _fit_member(A, b, reg, None, cand), cand

    fits = _map(fit, col_sets, threads)
    stack = np.array([f[0] for f in fits])
    cand = np.array([f[1] for f in fits])
    lib_ip = inclusion_probabilities(stack, cand)
    keep = lib_ip >= ens.ip_threshold
    stage = {
        "inclusion_probabilities": lib_ip,
        "kept": keep,
        "n_terms_sampled": ell,
        "column_sets": np.array(col_sets),
    }
    res = _bootstrap_ensemble(theta, ut, reg, ens, ens.aggregation, "library_bagging", threads,
                              candidates=keep, state_labels=state_labels)
    return EnsembleResult(**{**res.__dict__, "library_stage": stage})


def stability_selection(theta, ut, reg: RegressionConfig, ens: EnsembleConfig, with_replacement: bool = False,
                        *, threads: int = 1, state_labels=None) -> CoefficientMatrix:
    """Subsample, score terms by selection frequency, refit on the stable ones.

    Subsets have ``m // 2`` rows drawn without replacement, or ``m`` rows
    with replacement when ``with_replacement`` is set.  Terms selected in at
    least ``ip_threshold`` of the subsets are retained and the final
    coefficients are the unregularised least-squares fit on those terms over
    all rows.
    """
    A, b, labels = _arrays(theta, ut)
    m, D = A.shape
    n = b.shape[1]
    if m < 4:
        raise ParameterError(f"stability selection needs at least 4 rows, got {m}")
    rows = stability_subsets(m, ens, with_replacement)
    stack = np.array(_map(lambda r: _fit_member(A, b, reg, r, None), rows, threads))
    importance = inclusion_probabilities(stack)
    keep = importance >= ens.ip_threshold
    xi = np.zeros((D, n))
    for i in range(n):
        if keep[:, i].any():
            xi[keep[:, i], i] = np.linalg.lstsq(A[:, keep[:, i]], b[:, i], rcond=None)[0]
    state_labels = tuple(state_labels) if state_labels else default_state_names(n)
    return CoefficientMatrix(xi, labels, state_labels)


def stability_subsets(m: int, ens: EnsembleConfig, with_replacement: bool = False) -> list[np.ndarray]:
    """Row subsets used by :func:`stability_selection`, one per member."""
    out = []
    for k in range(int(ens.n_models)):
        rng = member_rng(ens.seed, _STAGE_STABILITY, k)
        if with_replacement:
            out.append(rng.integers(0, m, size=m))
        else:
            out.append(np.sort(rng.choice(m, m // 2, replace=False)))
    return out


def run_ensemble(method: str, theta, ut, reg: RegressionConfig, ens: EnsembleConfig, *, threads: int = 1,
                 state_labels=None, with_replacement: bool = False):
    """Dispatch by method name; ``"sindy"`` runs a single thresholded fit."""
    method = method.replace("-", "_")
    if method == "sindy":
        return sparsify_dynamics(theta, ut, reg, labels=state_labels)
    if method == "bagging":
        return bagging(theta, ut, reg, ens, threads=threads, state_labels=state_labels)
    if method == "bragging":
        return bragging(theta, ut, reg, ens, threads=threads, state_labels=state_labels)
    if method == "library_bagging":
        return library_bagging(theta, ut, reg, ens, threads=threads, state_labels=state_labels)
    if method == "stability_selection":
        return stability_selection(theta, ut, reg, ens, with_replacement, threads=threads, state_labels=state_labels)
    raise ParameterError(f"unknown method {method!r}")


def default_ensemble_config(method: str, **overrides) -> EnsembleConfig:
    """Protocol defaults: tol 0.4 for library bagging, 0.6 otherwise."""
    method = method.replace("-", "_")
    tol = 0.4 if method == "library_bagging" else 0.6
    return EnsembleConfig(**{"ip_threshold": tol, **overrides})


def identify(method: str, data, spec, reg: RegressionConfig, ens: EnsembleConfig | None = None, *,
             derivative: str = "finite_difference", controls=None, threads: int = 1):
    """Library, derivatives and regression for one dataset in one call.

    Returns ``(coefficients, ensemble_result)``; the second item is ``None``
    for ``"sindy"`` and ``"stability_selection"``.
    """
    method = method.replace("-", "_")
    theta = build_library(data, spec, controls)
    ut = differentiate(data, derivative)
    ens = ens or default_ensemble_config(method)
    out = run_ensemble(method, theta, ut, reg, ens, threads=threads, state_labels=data.names)
    if isinstance(out, EnsembleResult):
        return out.aggregated, out
    return out, None
