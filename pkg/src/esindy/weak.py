"""Weak (integral) formulation for PDE discovery.

The field ``u(t, x)`` is integrated against separable polynomial bumps
``phi(x) psi(t) = (1 - xb^2)^p (1 - tb^2)^p`` on rectangular subdomains,
where ``xb, tb`` are the subdomain coordinates rescaled to ``[-1, 1]``.
Because the bumps and their first ``p - 1`` derivatives vanish on the
subdomain boundary, every derivative can be moved onto the test function:

* left-hand side    ``int u_t phi psi       = -int u phi psi'``
* ``d^r u / dx^r``  ``int u^(r) phi psi     = (-1)^r int u phi^(r) psi``
* ``u^k u_x``       ``int u^k u_x phi psi   = -int u^(k+1)/(k+1) phi' psi``
* plain ``f(u)``    integrated directly.

Integrals use the trapezoidal rule on the native grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import Polynomial

from .ensemble import EnsembleConfig, EnsembleResult, library_bagging, run_ensemble
from .exceptions import InputError, ParameterError, ShapeError, SpecError
from .library import DataMatrix, EvaluatedLibrary, LibrarySpec, library_terms
from .regression import CoefficientMatrix, RegressionConfig, sparsify_dynamics

__all__ = ["WeakConfig", "WeakSystem", "assemble_weak_system", "weak_fit", "discover_pde", "bump", "pde_true_coefficients"]


@dataclass(frozen=True)
class WeakConfig:
    """Subdomain layout and test-function order.

    ``domain_size`` is ``(time points, space points)``; ``None`` entries mean
    one eighth of the corresponding grid dimension.
    """

    n_domains: int = 256
    domain_size: tuple[int | None, int | None] = (None, None)
    test_function_degree: int = 4
    seed: int = 0

    def __post_init__(self):
        if int(self.n_domains) < 1:
            raise ParameterError("n_domains must be >= 1")
        if int(self.test_function_degree) < 1:
            raise ParameterError("test_function_degree must be >= 1")
        object.__setattr__(self, "domain_size", tuple(self.domain_size))

    def resolved_size(self, m: int, s: int) -> tuple[int, int]:
        ht, hx = self.domain_size
        ht = max(m // 8, 3) if ht is None else int(ht)
        hx = max(s // 8, 3) if hx is None else int(hx)
        return ht, hx

    def to_dict(self) -> dict:
        return {
            "n_domains": self.n_domains,
            "domain_size": list(self.domain_size),
            "test_function_degree": self.test_function_degree,
            "seed": self.seed,
        }


@dataclass(frozen=True, eq=False)
class WeakSystem:
    """Integrated system ``q0 = Q xi``; row ``k`` comes from subdomain ``k``."""

    q0: np.ndarray
    Q: np.ndarray
    term_labels: tuple[str, ...]
    spec: LibrarySpec
    offsets: np.ndarray
    size: tuple[int, int]

    def library(self) -> EvaluatedLibrary:
        return EvaluatedLibrary(self.Q, self.term_labels, self.spec, tuple(library_terms(self.spec)))


def bump(npts: int, degree: int, order: int = 0, length: float | None = None) -> np.ndarray:
    """``order``-th derivative of ``(1 - xb^2)^degree`` on ``npts`` points.

    With ``length`` given, the derivative is with respect to the physical
    coordinate spanning that length rather than ``xb``.
    """
    xb = np.linspace(-1.0, 1.0, npts)
    poly = Polynomial([1.0, 0.0, -1.0]) ** degree
    vals = poly.deriv(order)(xb) if order else poly(xb)
    if length is not None and order:
        vals = vals * (2.0 / length) ** order
    return vals


def _trapezoid_weights(npts: int, h: float) -> np.ndarray:
    w = np.full(npts, h)
    w[0] = w[-1] = 0.5 * h
    return w


def assemble_weak_system(field: DataMatrix, spec: LibrarySpec, cfg: WeakConfig | None = None) -> WeakSystem:
    """Integrate the field and every library term over ``cfg.n_domains`` subdomains."""
    cfg = cfg or WeakConfig()
    if field.dx is None:
        raise InputError("weak formulation needs a field with dx")
    if spec.control_inputs:
        raise SpecError("control inputs are not supported in the weak formulation")
    u = field.values
    m, s = u.shape
    ht, hx = cfg.resolved_size(m, s)
    if ht < 3 or hx < 3:
        raise ParameterError(f"subdomain {ht}x{hx} is too small")
    if ht > m or hx > s:
        raise ParameterError(f"subdomain {ht}x{hx} does not fit in the {m}x{s} grid")
    p = int(cfg.test_function_degree)
    max_order = spec.spatial_derivative_order
    if p < max_order + 1:
        raise SpecError(f"test-function degree {p} cannot support derivatives of order {max_order} (need >= {max_order + 1})")

    terms = library_terms(spec)
    rng = np.random.default_rng(cfg.seed)
    K = int(cfg.n_domains)
    offsets = np.column_stack([rng.integers(0, m - ht + 1, size=K), rng.integers(0, s - hx + 1, size=K)])

    Lt, Lx = (ht - 1) * field.dt, (hx - 1) * field.dx
    wt = _trapezoid_weights(ht, field.dt)
    wx = _trapezoid_weights(hx, field.dx)
    psi = wt * bump(ht, p)
    dpsi = wt * bump(ht, p, 1, Lt)
    phis = {r: wx * bump(hx, p, r, Lx) for r in range(0, max(max_order, 1) + 1)}

    ti = offsets[:, 0, None] + np.arange(ht)
    xi = offsets[:, 1, None] + np.arange(hx)
    blocks = u[ti[:, :, None], xi[:, None, :]]  # (K, ht, hx)

    def integrate(F, tw, xw):
        return np.einsum("kij,i,j->k", F, tw, xw)

    q0 = -integrate(blocks, dpsi, phis[0])
    Q = np.empty((K, len(terms)))
    for j, t in enumerate(terms):
        if t.kind == "poly":
            Q[:, j] = integrate(blocks ** t.exponents[0], psi, phis[0])
        elif t.kind == "sin":
            Q[:, j] = integrate(np.sin(t.frequency * blocks), psi, phis[0])
        elif t.kind == "cos":
            Q[:, j] = integrate(np.cos(t.frequency * blocks), psi, phis[0])
        elif t.kind == "deriv":
            Q[:, j] = (-1) ** t.order * integrate(blocks, psi, phis[t.order])
        elif t.kind == "mixed":
            k = t.power
            Q[:, j] = -integrate(blocks ** (k + 1) / (k + 1), psi, phis[1])
        else:  # pragma: no cover
            raise SpecError(f"term {t.label!r} has no weak form")
    if not (np.all(np.isfinite(Q)) and np.all(np.isfinite(q0))):
        raise ShapeError("weak system contains non-finite entries")
    return WeakSystem(q0, Q, tuple(t.label for t in terms), spec, offsets, (ht, hx))


def _weak_regression(reg: RegressionConfig | None) -> RegressionConfig:
    if reg is None:
        return RegressionConfig(lambda1=0.1, normalize_columns=True)
    return reg


def weak_fit(field: DataMatrix, spec: LibrarySpec, wcfg: WeakConfig | None = None,
             reg: RegressionConfig | None = None) -> CoefficientMatrix:
    """Single thresholded regression on the weak system."""
    ws = assemble_weak_system(field, spec, wcfg)
    return sparsify_dynamics(ws.library(), ws.q0[:, None], _weak_regression(reg), labels=("u",))


def discover_pde(field: DataMatrix, spec: LibrarySpec, wcfg: WeakConfig | None = None,
                 reg: RegressionConfig | None = None, ens: EnsembleConfig | None = None,
                 method: str = "library_bagging", threads: int = 1) -> EnsembleResult:
    """Ensemble regression on the weak system; bootstrap rows are subdomains.

    Regression defaults to ``lambda1 = 0.1`` with column normalisation.
    """
    ws = assemble_weak_system(field, spec, wcfg)
    reg = _weak_regression(reg)
    ens = ens or EnsembleConfig(ip_threshold=0.4)
    lib = ws.library()
    if method == "library_bagging":
        return library_bagging(lib, ws.q0[:, None], reg, ens, threads=threads, state_labels=("u",))
    return run_ensemble(method, lib, ws.q0[:, None], reg, ens, threads=threads, state_labels=("u",))


def pde_true_coefficients(name: str, spec: LibrarySpec) -> CoefficientMatrix:
    """Ground-truth coefficient column of a reference PDE in ``spec``'s library."""
    from .systems import PDE_TRUE_TERMS

    labels = [t.label for t in library_terms(spec)]
    xi = np.zeros((len(labels), 1))
    for lab, c in PDE_TRUE_TERMS[name].items():
        if lab not in labels:
            raise SpecError(f"library lacks term {lab!r} needed by {name}")
        xi[labels.index(lab), 0] = c
    return CoefficientMatrix(xi, labels, ("u",))
