"""Sequentially thresholded least squares (STLS) and ridge (STRidge).

For each state ``i`` the regression solves a ridge problem, zeroes every
coefficient with ``|xi| < lambda1`` and re-solves on the surviving columns,
repeating until the support stops changing or ``max_iterations`` is reached.
``lambda2 = 0`` gives plain STLS.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exceptions import ParameterError, ShapeError
from .library import EvaluatedLibrary

__all__ = ["RegressionConfig", "CoefficientMatrix", "ridge_solve", "sparsify_dynamics", "stls_columns"]


@dataclass(frozen=True)
class RegressionConfig:
    """Hyperparameters of STRidge.

    Attributes
    ----------
    lambda1 : float
        Hard threshold on coefficient magnitude.
    lambda2 : float
        Ridge weight; 0 selects STLS.
    max_iterations : int
        Upper bound on threshold/refit rounds.
    normalize_columns : bool
        Scale library columns to unit 2-norm before solving.  The threshold
        always applies to coefficients in the original (unscaled) units.
    """

    lambda1: float = 0.2
    lambda2: float = 0.0
    max_iterations: int = 10
    normalize_columns: bool = False

    def __post_init__(self):
        if not self.lambda1 >= 0:
            raise ParameterError(f"lambda1 must be >= 0, got {self.lambda1}")
        if not self.lambda2 >= 0:
            raise ParameterError(f"lambda2 must be >= 0, got {self.lambda2}")
        if int(self.max_iterations) < 1:
            raise ParameterError(f"max_iterations must be >= 1, got {self.max_iterations}")

    def to_dict(self) -> dict:
        return {
            "lambda1": self.lambda1,
            "lambda2": self.lambda2,
            "max_iterations": self.max_iterations,
            "normalize_columns": self.normalize_columns,
        }


@dataclass(frozen=True, eq=False)
class CoefficientMatrix:
    """``D x n`` coefficients mapping library terms to state derivatives.

    ``empty_states`` flags states whose every coefficient was thresholded away.
    """

    xi: np.ndarray
    term_labels: tuple[str, ...]
    state_labels: tuple[str, ...]
    empty_states: tuple[bool, ...] = field(default=())

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim == 1:
            xi = xi[:, None]
        if xi.shape != (len(self.term_labels), len(self.state_labels)):
            raise ShapeError(
                f"xi shape {xi.shape} vs {len(self.term_labels)} terms x {len(self.state_labels)} states"
            )
        if not np.all(np.isfinite(xi)):
            raise ShapeError("coefficients contain non-finite entries")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "term_labels", tuple(self.term_labels))
        object.__setattr__(self, "state_labels", tuple(self.state_labels))
        if not self.empty_states:
            object.__setattr__(self, "empty_states", tuple(bool(v) for v in ~np.any(xi != 0, axis=0)))

    @property
    def support(self) -> np.ndarray:
        return self.xi != 0

    def equations(self, precision: int = 3) -> list[str]:
        """Human-readable ``d<state>/dt = ...`` lines."""
        lines = []
        for i, s in enumerate(self.state_labels):
            parts = []
            for d, lab in enumerate(self.term_labels):
                c = self.xi[d, i]
                if c == 0:
                    continue
                sign = "-" if c < 0 else "+"
                mag = f"{abs(c):.{precision}f}"
                body = mag if lab == "1" else f"{mag} {lab}"
                parts.append((sign, body))
            if not parts:
                rhs = "0"
            else:
                first_sign, first = parts[0]
                rhs = ("-" if first_sign == "-" else "") + first
                rhs += "".join(f" {sg} {b}" for sg, b in parts[1:])
            lines.append(f"d{s}/dt = {rhs}")
        return lines

    def to_dict(self) -> dict:
        return {
            "term_labels": list(self.term_labels),
            "state_labels": list(self.state_labels),
            "xi": self.xi.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CoefficientMatrix":
        return cls(np.array(d["xi"], dtype=float), d["term_labels"], d["state_labels"])


def _theta_array(theta) -> np.ndarray:
    return theta.theta if isinstance(theta, EvaluatedLibrary) else np.asarray(theta, dtype=float)


def ridge_solve(theta, target, lambda2: float = 0.0) -> np.ndarray:
    """Minimiser of ``||b - A x||^2 + lambda2 ||x||^2``.

    With ``lambda2 = 0`` this is the minimum-norm least-squares solution
    (SVD-based, so rank deficiency is handled).  For ``lambda2 > 0`` the
    equivalent augmented least-squares system is solved instead of forming
    the normal equations.
    """
    A = _theta_array(theta)
    b = np.asarray(getattr(target, "values", target), dtype=float)
    if A.ndim != 2:
        raise ShapeError("library must be 2-D")
    if b.shape[0] != A.shape[0]:
        raise ShapeError(f"library has {A.shape[0]} rows, target has {b.shape[0]}")
    if A.shape[0] < 1:
        raise ShapeError("library has no rows")
    if lambda2 < 0:
        raise ParameterError("lambda2 must be >= 0")
    if lambda2 == 0:
        return np.linalg.lstsq(A, b, rcond=None)[0]
    d = A.shape[1]
    A_aug = np.vstack([A, np.sqrt(lambda2) * np.eye(d)])
    b_aug = np.concatenate([b, np.zeros((d,) + b.shape[1:])])
    return np.linalg.lstsq(A_aug, b_aug, rcond=None)[0]


def stls_columns(A: np.ndarray, b: np.ndarray, config: RegressionConfig, candidates: np.ndarray | None = None):
    """Thresholded regression for a single target column.

    Returns ``(coefficients, n_iterations)``.  ``candidates`` (boolean, length
    D) restricts the regression to a column subset; other entries stay zero.
    """
    D = A.shape[1]
    active = np.ones(D, dtype=bool) if candidates is None else np.asarray(candidates, dtype=bool).copy()
    xi = np.zeros(D)
    if not active.any():
        return xi, 0
    if config.normalize_columns:
        norms = np.linalg.norm(A, axis=0)
        norms[norms == 0] = 1.0
    else:
        norms = None

    def solve(mask):
        sub = A[:, mask]
        if norms is None:
            return ridge_solve(sub, b, config.lambda2)
        return ridge_solve(sub / norms[mask], b, config.lambda2) / norms[mask]

    xi[active] = solve(active)
    it = 0
    for it in range(1, int(config.max_iterations) + 1):
        keep = active & ~(np.abs(xi) < config.lambda1)
        if np.array_equal(keep, active):
            break
        active = keep
        xi[~active] = 0.0
        if not active.any():
            break
        xi[active] = solve(active)
    # entries below threshold after the final refit are eliminated too
    xi[np.abs(xi) < config.lambda1] = 0.0
    return xi, it


def sparsify_dynamics(theta, ut, config: RegressionConfig | None = None, candidates=None, labels=None) -> CoefficientMatrix:
    """STRidge on every state column independently.

    Parameters
    ----------
    theta : EvaluatedLibrary or ndarray
        ``m x D`` library.
    ut : DerivativeMatrix or ndarray
        ``m x n`` targets.
    config : RegressionConfig
    candidates : ndarray of bool, optional
        ``D`` or ``D x n`` mask of columns each state may use.
    labels : sequence of str, optional
        State labels; defaults to ``x, y, z`` style names.
    """
    config = config or RegressionConfig()
    A = _theta_array(theta)
    b = np.asarray(getattr(ut, "values", ut), dtype=float)
    if b.ndim == 1:
        b = b[:, None]
    if A.shape[0] != b.shape[0]:
        raise ShapeError(f"library has {A.shape[0]} rows, derivatives have {b.shape[0]}")
    D, n = A.shape[1], b.shape[1]
    if candidates is not None:
        candidates = np.asarray(candidates, dtype=bool)
        if candidates.ndim == 1:
            candidates = np.repeat(candidates[:, None], n, axis=1)
        if candidates.shape != (D, n):
            raise ShapeError(f"candidate mask shape {candidates.shape}, expected {(D, n)}")
    xi = np.zeros((D, n))
    for i in range(n):
        xi[:, i], _ = stls_columns(A, b[:, i], config, None if candidates is None else candidates[:, i])
    term_labels = theta.term_labels if isinstance(theta, EvaluatedLibrary) else tuple(f"f{d}" for d in range(D))
    if labels is None:
        from .library import default_state_names

        labels = default_state_names(n)
    return CoefficientMatrix(xi, term_labels, tuple(labels))
