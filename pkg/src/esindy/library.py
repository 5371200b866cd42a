"""Candidate function libraries for ODE and PDE regression.

A library is described by a :class:`LibrarySpec` and expanded into a list of
:class:`Term` objects.  Each term knows how to evaluate itself from state,
control and (for PDEs) spatial-derivative columns, so a label alone determines
how its column is computed.

Column order is fixed:

1. constant
2. monomials of the state, graded lexicographic
3. ``sin`` / ``cos`` terms, grouped by frequency
4. spatial derivatives ``u_x, u_xx, ...`` (PDE mode)
5. mixed terms ``u^k u_x`` (PDE mode)
6. monomials that involve at least one control input, graded lexicographic
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Sequence

import numpy as np

from .exceptions import InputError, InsufficientDataError, ParameterError, ShapeError, SpecError

__all__ = [
    "DataMatrix",
    "LibrarySpec",
    "Term",
    "EvaluatedLibrary",
    "library_terms",
    "build_library",
    "evaluate_terms",
    "build_spatial_derivatives",
    "spatial_derivative",
    "fd_weights",
    "default_state_names",
    "polynomial_evaluator",
]

MAX_SPATIAL_ORDER = 4


def default_state_names(n: int, prefix: str = "x") -> tuple[str, ...]:
    if n <= 3 and prefix == "x":
        return ("x", "y", "z")[:n]
    return tuple(f"{prefix}{i + 1}" for i in range(n))


@dataclass(frozen=True, eq=False)
class DataMatrix:
    """Snapshot matrix with rows as time samples.

    For ODE data the columns are state components.  For a 1-D spatio-temporal
    field the columns are grid points in space and ``dx`` is set.
    """

    values: np.ndarray
    dt: float
    names: tuple[str, ...] = ()
    dx: float | None = None
    t0: float = 0.0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if values.ndim != 2:
            raise ShapeError(f"data must be 2-D, got shape {values.shape}")
        if values.shape[0] < 2:
            raise InsufficientDataError(f"need at least 2 samples, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise InputError("data contains non-finite entries")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ParameterError(f"dt must be positive, got {self.dt}")
        if self.dx is not None and not (np.isfinite(self.dx) and self.dx > 0):
            raise ParameterError(f"dx must be positive, got {self.dx}")
        names = tuple(self.names) if self.names else default_state_names(values.shape[1])
        if len(names) != values.shape[1]:
            raise ShapeError(f"{len(names)} names for {values.shape[1]} columns")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "names", names)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def n(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.m)

    def __len__(self):
        return self.m


@dataclass(frozen=True)
class LibrarySpec:
    """Which candidate functions to include.

    ``spatial_derivative_order > 0`` switches to PDE mode, where the data is a
    single scalar field ``u`` sampled on a (time x space) grid.
    """

    polynomial_degree: int = 2
    include_constant: bool = True
    trig_frequencies: tuple[float, ...] = ()
    spatial_derivative_order: int = 0
    include_mixed_terms: bool = False
    control_inputs: int = 0

    def __post_init__(self):
        object.__setattr__(self, "trig_frequencies", tuple(float(f) for f in self.trig_frequencies))
        if self.polynomial_degree < 0:
            raise SpecError("polynomial_degree must be non-negative")
        if not 0 <= self.spatial_derivative_order <= MAX_SPATIAL_ORDER:
            raise SpecError(f"spatial_derivative_order must be in [0, {MAX_SPATIAL_ORDER}]")
        if self.control_inputs < 0:
            raise SpecError("control_inputs must be non-negative")
        if self.pde_mode and self.control_inputs:
            raise SpecError("control inputs are not supported in PDE mode")
        if self.include_mixed_terms and not self.pde_mode:
            raise SpecError("mixed terms require spatial_derivative_order >= 1")

    @property
    def pde_mode(self) -> bool:
        return self.spatial_derivative_order > 0

    def to_dict(self) -> dict:
        return {
            "polynomial_degree": self.polynomial_degree,
            "include_constant": self.include_constant,
            "trig_frequencies": list(self.trig_frequencies),
            "spatial_derivative_order": self.spatial_derivative_order,
            "include_mixed_terms": self.include_mixed_terms,
            "control_inputs": self.control_inputs,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LibrarySpec":
        return cls(**{k: (tuple(v) if k == "trig_frequencies" else v) for k, v in d.items()})


@dataclass(frozen=True)
class Term:
    """One library column.

    ``kind`` is one of ``"poly"``, ``"sin"``, ``"cos"``, ``"deriv"``, ``"mixed"``.
    ``exponents`` index the augmented variable vector (states then controls).
    """

    kind: str
    label: str
    exponents: tuple[int, ...] = ()
    variable: int = 0
    frequency: float = 0.0
    order: int = 0
    power: int = 0

    @property
    def degree(self) -> int:
        return sum(self.exponents)


def _monomial_label(exps: Sequence[int], names: Sequence[str]) -> str:
    parts = []
    for name, e in zip(names, exps):
        if e == 1:
            parts.append(name)
        elif e > 1:
            parts.append(f"{name}^{e}")
    return " ".join(parts) if parts else "1"


def _graded_lex(n_vars: int, degree: int) -> list[tuple[int, ...]]:
    out = []
    for k in range(1, degree + 1):
        for combo in combinations_with_replacement(range(n_vars), k):
            exps = [0] * n_vars
            for v in combo:
                exps[v] += 1
            out.append(tuple(exps))
    return out


def _deriv_label(order: int) -> str:
    return "u_" + "x" * order


def library_terms(
    spec: LibrarySpec,
    n_states: int = 1,
    names: Sequence[str] | None = None,
    control_names: Sequence[str] | None = None,
) -> list[Term]:
    """Expand ``spec`` into the ordered list of library terms."""
    if spec.pde_mode:
        n_states = 1
        names = ("u",)
    names = tuple(names) if names else default_state_names(n_states)
    if len(names) != n_states:
        raise ShapeError(f"{len(names)} names for {n_states} states")
    n_ctrl = spec.control_inputs
    if control_names is None:
        control_names = ("u",) if n_ctrl == 1 else tuple(f"u{i + 1}" for i in range(n_ctrl))
    control_names = tuple(control_names)
    if len(control_names) != n_ctrl:
        raise ShapeError(f"{len(control_names)} control names for {n_ctrl} inputs")
    all_names = names + control_names
    n_aug = n_states + n_ctrl

    terms: list[Term] = []
    if spec.include_constant:
        terms.append(Term("poly", "1", (0,) * n_aug))
    monomials = _graded_lex(n_aug, spec.polynomial_degree)
    control_monomials = []
    for exps in monomials:
        term = Term("poly", _monomial_label(exps, all_names), exps)
        if any(exps[n_states:]):
            control_monomials.append(term)
        else:
            terms.append(term)
    for f in spec.trig_frequencies:
        fs = "" if f == 1.0 else f"{f:g}"
        for fn in ("sin", "cos"):
            for i, name in enumerate(names):
                terms.append(Term(fn, f"{fn}({fs}{name})", variable=i, frequency=f))
    for r in range(1, spec.spatial_derivative_order + 1):
        terms.append(Term("deriv", _deriv_label(r), order=r))
    if spec.include_mixed_terms:
        for k in range(1, max(spec.polynomial_degree, 1) + 1):
            lab = "u" if k == 1 else f"u^{k}"
            terms.append(Term("mixed", f"{lab} u_x", order=1, power=k))
    terms.extend(control_monomials)

    if not terms:
        raise SpecError("library specification produces no terms")
    labels = [t.label for t in terms]
    if len(set(labels)) != len(labels):
        raise SpecError(f"duplicate term labels: {labels}")
    return terms


def evaluate_terms(
    terms: Sequence[Term],
    states: np.ndarray,
    controls: np.ndarray | None = None,
    derivatives: dict[int, np.ndarray] | None = None,
) -> np.ndarray:
    """Evaluate ``terms`` row-wise.

    ``states`` has shape ``(..., n)``; leading axes are broadcast, so the same
    call serves a full trajectory or a batch of single states.
    ``derivatives`` maps derivative order to arrays shaped like ``states[..., 0]``.
    """
    states = np.asarray(states, dtype=float)
    if controls is not None:
        controls = np.asarray(controls, dtype=float)
        if controls.ndim == states.ndim - 1:
            controls = controls[..., None]
        aug = np.concatenate([states, np.broadcast_to(controls, states.shape[:-1] + controls.shape[-1:])], axis=-1)
    else:
        aug = states
    lead = aug.shape[:-1]
    out = np.empty(lead + (len(terms),))
    for j, t in enumerate(terms):
        if t.kind == "poly":
            if len(t.exponents) > aug.shape[-1]:
                raise ShapeError("control columns missing for control terms")
            col = np.ones(lead)
            for v, e in enumerate(t.exponents):
                for _ in range(e):
                    col = col * aug[..., v]
            out[..., j] = col
        elif t.kind == "sin":
            out[..., j] = np.sin(t.frequency * aug[..., t.variable])
        elif t.kind == "cos":
            out[..., j] = np.cos(t.frequency * aug[..., t.variable])
        elif t.kind == "deriv":
            out[..., j] = derivatives[t.order]
        elif t.kind == "mixed":
            out[..., j] = aug[..., 0] ** t.power * derivatives[t.order]
        else:  # pragma: no cover - Term kinds are closed
            raise SpecError(f"unknown term kind {t.kind!r}")
    return out


def polynomial_evaluator(terms: Sequence[Term]):
    """Vectorised evaluator for a library made only of monomials, else ``None``.

    The returned function maps an augmented variable array ``(..., n_aug)``
    (states then controls) to ``(..., D)`` with one gather-and-multiply per
    factor.  Controls may instead be passed separately as ``extra``, which
    is broadcast into the trailing columns.
    """
    if not terms or any(t.kind != "poly" for t in terms):
        return None
    n_aug = len(terms[0].exponents)
    width = max(max(t.degree for t in terms), 1)
    # factor indices per term, padded with the index of an appended ones column;
    # ascending order reproduces the multiplication order of evaluate_terms
    idx = np.full((len(terms), width), n_aug)
    for j, t in enumerate(terms):
        factors = [v for v, e in enumerate(t.exponents) for _ in range(e)]
        idx[j, : len(factors)] = factors

    def evaluate(aug, extra=None):
        aug = np.asarray(aug, dtype=float)
        k0 = aug.shape[-1]
        ap = np.empty(aug.shape[:-1] + (n_aug + 1,))
        ap[..., :k0] = aug
        if extra is not None:
            ap[..., k0:n_aug] = extra
        ap[..., n_aug] = 1.0
        out = ap[..., idx[:, 0]]
        for k in range(1, width):
            out *= ap[..., idx[:, k]]
        return out

    return evaluate


@dataclass(frozen=True, eq=False)
class EvaluatedLibrary:
    """The matrix ``theta`` (rows = samples, columns = terms) with its labels."""

    theta: np.ndarray
    term_labels: tuple[str, ...]
    spec: LibrarySpec
    terms: tuple[Term, ...] = field(default=(), repr=False)

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 2:
            raise ShapeError("theta must be 2-D")
        if theta.shape[1] != len(self.term_labels):
            raise ShapeError(f"{theta.shape[1]} columns but {len(self.term_labels)} labels")
        object.__setattr__(self, "term_labels", tuple(self.term_labels))

    @property
    def shape(self):
        return self.theta.shape

    def subset(self, rows=None, cols=None) -> "EvaluatedLibrary":
        theta = self.theta
        if rows is not None:
            theta = theta[rows]
        labels, terms = self.term_labels, self.terms
        if cols is not None:
            cols = np.asarray(cols)
            theta = theta[:, cols]
            labels = tuple(np.asarray(labels, dtype=object)[cols])
            terms = tuple(np.asarray(terms, dtype=object)[cols]) if terms else ()
        return EvaluatedLibrary(theta, labels, self.spec, terms)


def _as_values(data) -> np.ndarray:
    return data.values if isinstance(data, DataMatrix) else np.asarray(data, dtype=float)


def build_library(data: DataMatrix, spec: LibrarySpec, controls=None) -> EvaluatedLibrary:
    """Evaluate the candidate library on ``data``.

    In PDE mode ``data`` is a field (rows = time, columns = space, ``dx`` set)
    and every column of the result is the field flattened column-major, so
    time varies fastest.

    Parameters
    ----------
    data : DataMatrix
    spec : LibrarySpec
    controls : array_like or DataMatrix, optional
        ``m x spec.control_inputs`` exogenous inputs aligned with ``data``.
    """
    values = _as_values(data)
    if values.ndim == 1:
        values = values[:, None]
    if values.size == 0:
        raise InputError("data is empty")
    if not np.all(np.isfinite(values)):
        raise InputError("data contains non-finite entries")

    if spec.pde_mode:
        dx = data.dx if isinstance(data, DataMatrix) else None
        if dx is None:
            raise InputError("PDE-mode library needs a field with dx")
        terms = library_terms(spec)
        derivs = {
            r: spatial_derivative(values, dx, r).ravel(order="F")
            for r in range(1, spec.spatial_derivative_order + 1)
        }
        theta = evaluate_terms(terms, values.ravel(order="F")[:, None], derivatives=derivs)
        return EvaluatedLibrary(theta, [t.label for t in terms], spec, tuple(terms))

    names = data.names if isinstance(data, DataMatrix) else None
    ctrl = None
    ctrl_names = None
    if spec.control_inputs:
        if controls is None:
            raise InputError(f"spec expects {spec.control_inputs} control inputs, none given")
        ctrl = _as_values(controls)
        if ctrl.ndim == 1:
            ctrl = ctrl[:, None]
        if ctrl.shape != (values.shape[0], spec.control_inputs):
            raise ShapeError(f"controls shape {ctrl.shape}, expected {(values.shape[0], spec.control_inputs)}")
        if isinstance(controls, DataMatrix):
            ctrl_names = controls.names
    elif controls is not None:
        raise InputError("controls given but spec.control_inputs == 0")
    terms = library_terms(spec, values.shape[1], names, ctrl_names)
    theta = evaluate_terms(terms, values, ctrl)
    return EvaluatedLibrary(theta, [t.label for t in terms], spec, tuple(terms))


def fd_weights(z: float, x: np.ndarray, order: int) -> np.ndarray:
    """Finite-difference weights for the ``order``-th derivative at ``z``.

    Fornberg's recursion on arbitrary nodes ``x``.
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    c = np.zeros((n, order + 1))
    c1, c4 = 1.0, x[0] - z
    c[0, 0] = 1.0
    for i in range(1, n):
        mn = min(i, order)
        c2, c5, c4 = 1.0, c4, x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c[:, order]


def spatial_derivative(values: np.ndarray, dx: float, order: int, axis: int = 1) -> np.ndarray:
    """Second-order accurate finite-difference derivative along ``axis``.

    Central stencils in the interior; one-sided stencils of ``order + 2``
    points where the central stencil does not fit.
    """
    if order < 1 or order > MAX_SPATIAL_ORDER:
        raise ParameterError(f"derivative order must be in [1, {MAX_SPATIAL_ORDER}]")
    u = np.moveaxis(np.asarray(values, dtype=float), axis, -1)
    s = u.shape[-1]
    if s < 2 * order + 1:
        raise InsufficientDataError(f"{s} grid points cannot support derivative order {order}")
    half = (order + 1) // 2
    w = fd_weights(0.0, np.arange(-half, half + 1), order) / dx**order
    out = np.zeros_like(u)
    for k, wk in enumerate(w):
        out[..., half : s - half] += wk * u[..., k : s - 2 * half + k]
    npts = order + 2
    for i in range(half):
        wl = fd_weights(float(i), np.arange(npts), order) / dx**order
        out[..., i] = u[..., :npts] @ wl
        wr = fd_weights(float(npts - 1 - i), np.arange(npts), order) / dx**order
        out[..., s - 1 - i] = u[..., s - npts :] @ wr
    return np.moveaxis(out, -1, axis)


def build_spatial_derivatives(field: DataMatrix, dx: float | None = None, max_order: int = 3) -> EvaluatedLibrary:
    """Derivative columns ``u_x ... u_x^(max_order)`` of a (time x space) field,
    flattened column-major."""
    values = _as_values(field)
    if dx is None:
        dx = getattr(field, "dx", None)
    if dx is None or not dx > 0:
        raise ParameterError(f"dx must be positive, got {dx}")
    if not 1 <= max_order <= MAX_SPATIAL_ORDER:
        raise ParameterError(f"max_order must be in [1, {MAX_SPATIAL_ORDER}]")
    if values.shape[1] < 2 * max_order + 1:
        raise InsufficientDataError(
            f"{values.shape[1]} grid points; derivatives to order {max_order} need {2 * max_order + 1}"
        )
    spec = LibrarySpec(polynomial_degree=0, include_constant=False, spatial_derivative_order=max_order)
    terms = library_terms(spec)
    cols = np.column_stack([spatial_derivative(values, dx, r).ravel(order="F") for r in range(1, max_order + 1)])
    return EvaluatedLibrary(cols, [t.label for t in terms], spec, tuple(terms))
