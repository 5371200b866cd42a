"""Reference dynamical systems, simulators, noise model and bundled data."""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable

import numpy as np

from .exceptions import DivergenceError, IngestionError, ParameterError
from .library import DataMatrix, LibrarySpec, library_terms
from .regression import CoefficientMatrix

__all__ = [
    "SystemDefinition",
    "rk4_step",
    "simulate_ode",
    "lorenz",
    "forced_lorenz",
    "lotka_volterra",
    "LORENZ_U0",
    "simulate_pde",
    "PDE_TRUE_TERMS",
    "kdv_soliton",
    "burgers_characteristics",
    "add_noise",
    "rng_from",
    "load_hudson_bay",
    "data_dir",
]

LORENZ_U0 = (-8.0, 7.0, 27.0)
DATA_ENV_VAR = "ESINDY_DATA_DIR"


@dataclass(frozen=True, eq=False)
class SystemDefinition:
    """A vector field ``du/dt = rhs(state, control, parameters)``.

    ``rhs`` must accept batched states of shape ``(..., n)``.
    """

    name: str
    state_dim: int
    rhs: Callable
    parameters: dict = field(default_factory=dict)
    library_spec: LibrarySpec | None = None
    true_coefficients: CoefficientMatrix | None = None
    fixed_points: tuple = ()
    state_names: tuple[str, ...] = ()
    control_dim: int = 0

    def __call__(self, state, control=None):
        return self.rhs(np.asarray(state, dtype=float), control, self.parameters)


def _coefficients(spec: LibrarySpec, names, entries: dict, control_names=None) -> CoefficientMatrix:
    terms = library_terms(spec, len(names), names, control_names)
    labels = [t.label for t in terms]
    xi = np.zeros((len(labels), len(names)))
    for state, row in entries.items():
        j = names.index(state)
        for label, c in row.items():
            xi[labels.index(label), j] = c
    return CoefficientMatrix(xi, labels, names)


def _control_value(control, shape):
    if control is None:
        return 0.0
    c = np.asarray(control, dtype=float)
    if c.ndim and c.shape[-1] == 1:
        c = c[..., 0]
    return c


def lorenz(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> SystemDefinition:
    def rhs(s, control, p):
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        return np.stack(
            [p["sigma"] * (y - x), x * (p["rho"] - z) - y, x * y - p["beta"] * z],
            axis=-1,
        )

    names = ("x", "y", "z")
    spec = LibrarySpec(polynomial_degree=2, include_constant=True)
    coefs = _coefficients(
        spec,
        names,
        {
            "x": {"x": -sigma, "y": sigma},
            "y": {"x": rho, "y": -1.0, "x z": -1.0},
            "z": {"x y": 1.0, "z": -beta},
        },
    )
    c = np.sqrt(beta * (rho - 1.0))
    fps = ((0.0, 0.0, 0.0), (c, c, rho - 1.0), (-c, -c, rho - 1.0))
    return SystemDefinition(
        "lorenz", 3, rhs, {"sigma": sigma, "rho": rho, "beta": beta}, spec, coefs, fps, names
    )


def forced_lorenz(sigma: float = 10.0, rho: float = 28.0, beta: float = 8.0 / 3.0) -> SystemDefinition:
    """Lorenz system with an additive control on the first state."""

    def rhs(s, control, p):
        x, y, z = s[..., 0], s[..., 1], s[..., 2]
        u = _control_value(control, x.shape)
        return np.stack(
            [p["sigma"] * (y - x) + u, x * (p["rho"] - z) - y, x * y - p["beta"] * z],
            axis=-1,
        )

    names = ("x", "y", "z")
    spec = LibrarySpec(polynomial_degree=2, include_constant=True, control_inputs=1)
    coefs = _coefficients(
        spec,
        names,
        {
            "x": {"x": -sigma, "y": sigma, "u": 1.0},
            "y": {"x": rho, "y": -1.0, "x z": -1.0},
            "z": {"x y": 1.0, "z": -beta},
        },
    )
    c = np.sqrt(beta * (rho - 1.0))
    fps = ((0.0, 0.0, 0.0), (c, c, rho - 1.0), (-c, -c, rho - 1.0))
    return SystemDefinition(
        "forced_lorenz", 3, rhs, {"sigma": sigma, "rho": rho, "beta": beta}, spec, coefs, fps, names, 1
    )


def lotka_volterra(a: float = 0.55, b: float = 0.028, c: float = 0.84, d: float = 0.026) -> SystemDefinition:
    """Predator-prey model ``x' = a x - b x y``, ``y' = -c y + d x y``."""

    def rhs(s, control, p):
        x, y = s[..., 0], s[..., 1]
        return np.stack([p["a"] * x - p["b"] * x * y, -p["c"] * y + p["d"] * x * y], axis=-1)

    names = ("x", "y")
    spec = LibrarySpec(polynomial_degree=2, include_constant=True)
    coefs = _coefficients(spec, names, {"x": {"x": a, "x y": -b}, "y": {"y": -c, "x y": d}})
    fps = [(0.0, 0.0)]
    if b and d:
        fps.append((c / d, a / b))
    return SystemDefinition(
        "lotka_volterra", 2, rhs, {"a": a, "b": b, "c": c, "d": d}, spec, coefs, tuple(fps), names
    )


def rk4_step(f: Callable, x: np.ndarray, dt: float, control=None) -> np.ndarray:
    """One classical Runge-Kutta step with the control held constant."""
    k1 = f(x, control)
    k2 = f(x + 0.5 * dt * k1, control)
    k3 = f(x + 0.5 * dt * k2, control)
    k4 = f(x + dt * k3, control)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def n_samples(T: float, dt: float) -> int:
    return int(np.floor(T / dt + 1e-9)) + 1


def simulate_ode(sys: SystemDefinition | Callable, u0, T: float, dt: float, control=None, t0: float = 0.0) -> DataMatrix:
    """Fixed-step RK4 integration returning ``floor(T/dt) + 1`` samples.

    ``control`` is either a callable ``t -> u`` or an array with one row per
    step (extra trailing rows are ignored); it is held constant within a step.
    """
    if not dt > 0:
        raise ParameterError(f"dt must be positive, got {dt}")
    if not T >= dt:
        raise ParameterError(f"T ({T}) must be at least dt ({dt})")
    m = n_samples(T, dt)
    x = np.array(u0, dtype=float)
    out = np.empty((m, x.size))
    out[0] = x
    f = sys if not isinstance(sys, SystemDefinition) else sys.__call__
    ctrl = None
    if control is not None and not callable(control):
        ctrl = np.asarray(control, dtype=float)
        if ctrl.shape[0] < m - 1:
            raise ParameterError(f"control has {ctrl.shape[0]} rows, need {m - 1}")
    for k in range(m - 1):
        if control is None:
            uk = None
        elif ctrl is not None:
            uk = ctrl[k]
        else:
            uk = control(t0 + k * dt)
        x = rk4_step(f, x, dt, uk)
        if not np.all(np.isfinite(x)):
            raise DivergenceError(f"state became non-finite at step {k + 1}", step=k + 1)
        out[k + 1] = x
    names = getattr(sys, "state_names", ()) or ()
    return DataMatrix(out, dt, names, t0=t0)


# ---------------------------------------------------------------------------
# PDEs: pseudo-spectral in space, ETDRK4 in time


PDE_TRUE_TERMS = {
    "burgers": {"u u_x": -1.0},
    "kdv": {"u u_x": -6.0, "u_xxx": -1.0},
    "kuramoto_sivashinsky": {"u u_x": -1.0, "u_xx": -1.0, "u_xxxx": -1.0},
}

_PDE_DEFAULTS = {
    # length, grid points, T, dt
    "burgers": (2 * np.pi, 256, 0.5, 1e-3),
    "kdv": (40.0, 512, 2.0, 1e-4),
    "kuramoto_sivashinsky": (22.0, 64, 100.0, 0.05),
}


def _default_ic(name: str, x: np.ndarray, length: float) -> np.ndarray:
    if name == "burgers":
        return np.sin(2 * np.pi * x / length)
    if name == "kdv":
        return kdv_soliton(x, 0.0, 1.0, 0.3 * length, length) + kdv_soliton(x, 0.0, 0.7, 0.6 * length, length)
    k = 2 * np.pi / length
    return np.cos(k * x) * (1 + np.sin(k * x))


def kdv_soliton(x, t, kappa, x0=0.0, length=None):
    """``2 kappa^2 sech^2(kappa (x - x0 - 4 kappa^2 t))``, optionally periodised."""
    xi = np.asarray(x, dtype=float) - x0 - 4 * kappa**2 * t
    if length is not None:
        xi = (xi + length / 2) % length - length / 2
    return 2 * kappa**2 / np.cosh(kappa * xi) ** 2


def burgers_characteristics(u0: Callable, x, t, iterations: int = 60) -> np.ndarray:
    """Pre-shock solution of ``u_t = -u u_x`` via ``u = u0(x - u t)`` (Newton)."""
    x = np.asarray(x, dtype=float)
    u = u0(x)
    h = 1e-6
    for _ in range(iterations):
        g = u - u0(x - u * t)
        dg = 1 + t * (u0(x - u * t + h) - u0(x - u * t - h)) / (2 * h)
        step = g / dg
        u = u - step
        if np.max(np.abs(step)) < 1e-15:
            break
    return u


def _etdrk4_coefficients(L: np.ndarray, h: float, n_contour: int = 32):
    E = np.exp(h * L)
    E2 = np.exp(h * L / 2)
    real = bool(np.all(np.isreal(L)))
    # upper half circle suffices for real L (conjugate symmetry); full circle otherwise
    arc = np.pi if real else 2 * np.pi
    r = np.exp(1j * arc * (np.arange(1, n_contour + 1) - 0.5) / n_contour)
    LR = h * L[:, None] + r[None, :]
    Q = h * np.mean((np.exp(LR / 2) - 1) / LR, axis=1)
    f1 = h * np.mean((-4 - LR + np.exp(LR) * (4 - 3 * LR + LR**2)) / LR**3, axis=1)
    f2 = h * np.mean((2 + LR + np.exp(LR) * (-2 + LR)) / LR**3, axis=1)
    f3 = h * np.mean((-4 - 3 * LR - LR**2 + np.exp(LR) * (4 - LR)) / LR**3, axis=1)
    if real:
        Q, f1, f2, f3 = Q.real, f1.real, f2.real, f3.real
    return E, E2, Q, f1, f2, f3


def simulate_pde(
    name: str,
    n_points: int | None = None,
    length: float | None = None,
    T: float | None = None,
    dt: float | None = None,
    u0=None,
    save_every: int = 1,
) -> DataMatrix:
    """Simulate a periodic 1-D PDE; rows of the result are saved time levels.

    Systems and their linear / nonlinear splits::

        burgers               u_t = -u u_x                  (exponential filter)
        kdv                   u_t = -6 u u_x - u_xxx
        kuramoto_sivashinsky  u_t = -u u_x - u_xx - u_xxxx

    Stability: the explicit nonlinear term requires roughly
    ``dt * max|u| * k_max * c <= 2.5`` with ``c = 1`` (Burgers, KS) or 6 (KdV);
    violation raises :class:`DivergenceError`.
    """
    if name not in _PDE_DEFAULTS:
        raise ParameterError(f"unknown PDE {name!r}; choose from {sorted(_PDE_DEFAULTS)}")
    d_len, d_n, d_T, d_dt = _PDE_DEFAULTS[name]
    length = d_len if length is None else float(length)
    n = d_n if n_points is None else int(n_points)
    T = d_T if T is None else float(T)
    dt = d_dt if dt is None else float(dt)
    if n < 8 or n % 2:
        raise ParameterError("n_points must be even and >= 8")
    if not dt > 0 or not T >= dt:
        raise ParameterError("need dt > 0 and T >= dt")
    dx = length / n
    x = dx * np.arange(n)
    u = _default_ic(name, x, length) if u0 is None else (u0(x) if callable(u0) else np.asarray(u0, dtype=float))

    k = 2 * np.pi * np.fft.rfftfreq(n, d=dx)
    ik = 1j * k
    kmax = k.max()
    dealias = k <= (2.0 / 3.0) * kmax
    if name == "burgers":
        L = np.zeros_like(k)
        coef = 0.5
        filt = np.exp(-36.0 * (k / kmax) ** 36)
    elif name == "kdv":
        L = 1j * k**3
        coef = 3.0
        filt = None
    else:
        L = k**2 - k**4
        coef = 0.5
        filt = None

    def nonlinear(v):
        w = np.fft.irfft(v, n=n)
        return -coef * ik * dealias * np.fft.rfft(w * w)

    E, E2, Q, f1, f2, f3 = _etdrk4_coefficients(L, dt)
    adv = 2 * coef
    n_steps = int(np.floor(T / dt + 1e-9))
    frames = [u.copy()]
    v = np.fft.rfft(u)
    for step in range(1, n_steps + 1):
        umax = np.max(np.abs(u))
        if not np.isfinite(umax) or dt * umax * kmax * adv > 2.5:
            raise DivergenceError(f"{name}: CFL violated or non-finite field at step {step}", step=step)
        Nv = nonlinear(v)
        a = E2 * v + Q * Nv
        Na = nonlinear(a)
        b = E2 * v + Q * Na
        Nb = nonlinear(b)
        c = E2 * a + Q * (2 * Nb - Nv)
        Nc = nonlinear(c)
        v = E * v + Nv * f1 + 2 * (Na + Nb) * f2 + Nc * f3
        if filt is not None:
            v = v * filt
        u = np.fft.irfft(v, n=n)
        if not np.all(np.isfinite(u)):
            raise DivergenceError(f"{name}: non-finite field at step {step}", step=step)
        if step % save_every == 0:
            frames.append(u.copy())
    names = tuple(f"x{j}" for j in range(n))
    return DataMatrix(np.array(frames), dt * save_every, names, dx=dx)


# ---------------------------------------------------------------------------
# noise, data


def rng_from(rng) -> np.random.Generator:
    """Accept a Generator, a SeedSequence, an int seed or None."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


NOISE_MODES = ("percent_rms", "variance_over_rms")


def add_noise(data: DataMatrix, sigma: float, rng=None, mode: str = "percent_rms") -> DataMatrix:
    """Add i.i.d. zero-mean Gaussian noise scaled by the trajectory RMS.

    ``mode="percent_rms"`` uses standard deviation ``sigma * rms`` (so
    ``sigma=0.025`` is "2.5 % noise"); ``mode="variance_over_rms"`` uses
    variance ``sigma / rms``.  ``rms`` is taken over every entry of ``data``.
    """
    if sigma < 0:
        raise ParameterError(f"sigma must be >= 0, got {sigma}")
    if mode not in NOISE_MODES:
        raise ParameterError(f"unknown noise mode {mode!r}")
    if sigma == 0:
        return data
    u = data.values
    rms = float(np.sqrt(np.mean(u**2)))
    std = sigma * rms if mode == "percent_rms" else np.sqrt(sigma / rms)
    noisy = u + std * rng_from(rng).standard_normal(u.shape)
    return DataMatrix(noisy, data.dt, data.names, data.dx, data.t0)


def data_dir() -> Path:
    env = os.environ.get(DATA_ENV_VAR)
    if env:
        return Path(env)
    return Path(str(resources.files("esindy") / "data"))


def load_hudson_bay(path: str | os.PathLike | None = None) -> DataMatrix:
    """Yearly hare and lynx pelts (thousands), 1900-1920, ``dt = 1`` year."""
    path = Path(path) if path is not None else data_dir() / "hudson_bay.csv"
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    except OSError as exc:
        raise IngestionError(f"cannot read Hudson Bay data at {path}: {exc}") from exc
    try:
        header, body = rows[0], rows[1:]
        cols = [h.strip().lower() for h in header]
        iy, ih, il = cols.index("year"), cols.index("hare"), cols.index("lynx")
        years = np.array([float(r[iy]) for r in body])
        values = np.array([[float(r[ih]), float(r[il])] for r in body])
    except (IndexError, ValueError) as exc:
        raise IngestionError(f"malformed Hudson Bay data at {path}: {exc}") from exc
    if len(years) < 2 or not np.all(np.diff(years) == 1):
        raise IngestionError(f"Hudson Bay data at {path} must have consecutive years")
    if not np.all(np.isfinite(values)) or np.any(values <= 0):
        raise IngestionError(f"Hudson Bay data at {path} has non-positive or non-finite values")
    return DataMatrix(values, 1.0, ("hare", "lynx"), t0=float(years[0]))
