"""Time derivatives of sampled trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import savgol_coeffs

from .exceptions import InsufficientDataError, ParameterError, ShapeError
from .library import DataMatrix, fd_weights

__all__ = ["DerivativeMatrix", "finite_difference_time", "smoothed_difference", "differentiate", "DEFAULT_WINDOW",
           "DERIVATIVE_METHODS"]

DEFAULT_WINDOW = 11
DERIVATIVE_METHODS = ("finite_difference", "finite_difference_4", "smoothed")


@dataclass(frozen=True, eq=False)
class DerivativeMatrix:
    values: np.ndarray
    method_tag: str

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim == 1:
            values = values[:, None]
        if not np.all(np.isfinite(values)):
            raise ShapeError("derivative contains non-finite entries")
        object.__setattr__(self, "values", values)

    @property
    def shape(self):
        return self.values.shape


def finite_difference_time(data: DataMatrix, accuracy: int = 2) -> DerivativeMatrix:
    """Central differences in the interior, one-sided at the ends.

    ``accuracy=2`` is the three-point scheme (second order everywhere);
    ``accuracy=4`` uses five-point stencils, shifted inwards near the ends.
    """
    if accuracy == 2:
        if data.m < 3:
            raise InsufficientDataError(f"need at least 3 samples, got {data.m}")
        return DerivativeMatrix(np.gradient(data.values, data.dt, axis=0, edge_order=2), "finite_difference")
    if accuracy != 4:
        raise ParameterError(f"accuracy must be 2 or 4, got {accuracy}")
    if data.m < 5:
        raise InsufficientDataError(f"need at least 5 samples, got {data.m}")
    u, m, h = data.values, data.m, data.dt
    out = np.empty_like(u)
    out[2:-2] = (u[:-4] - 8 * u[1:-3] + 8 * u[3:-1] - u[4:]) / (12 * h)
    nodes = np.arange(5.0)
    for i in (0, 1):
        out[i] = fd_weights(float(i), nodes, 1) @ u[:5] / h
        out[m - 1 - i] = fd_weights(float(4 - i), nodes, 1) @ u[-5:] / h
    return DerivativeMatrix(out, "finite_difference_4")


def smoothed_difference(data: DataMatrix, window: int = DEFAULT_WINDOW) -> DerivativeMatrix:
    """Derivative of a local least-squares quadratic fit (Savitzky-Golay).

    The fit window is centred on each sample; near the ends it is truncated
    to the samples that exist, so the fit is no longer centred there.
    """
    window = int(window)
    if window < 3 or window % 2 == 0:
        raise ParameterError(f"window must be an odd integer >= 3, got {window}")
    if window >= data.m:
        raise ParameterError(f"window ({window}) must be smaller than the number of samples ({data.m})")
    u = data.values
    m, half = data.m, window // 2
    out = np.empty_like(u)
    coeffs = savgol_coeffs(window, 2, deriv=1, delta=data.dt, use="dot")
    # interior: correlate with the centred stencil
    for k, c in enumerate(coeffs):
        if k == 0:
            out[half : m - half] = c * u[k : m - 2 * half + k]
        else:
            out[half : m - half] += c * u[k : m - 2 * half + k]
    for i in list(range(half)) + list(range(m - half, m)):
        lo, hi = max(0, i - half), min(m, i + half + 1)
        t = (np.arange(lo, hi) - i) * data.dt
        # quadratic a + b t + c t^2; derivative at t=0 is b
        vander = np.vander(t, 3, increasing=True)
        sol = np.linalg.lstsq(vander, u[lo:hi], rcond=None)[0]
        out[i] = sol[1]
    return DerivativeMatrix(out, f"savgol_{window}")


def differentiate(data: DataMatrix, method: str = "finite_difference", window: int = DEFAULT_WINDOW) -> DerivativeMatrix:
    if method in ("finite_difference", "fd"):
        return finite_difference_time(data)
    if method in ("finite_difference_4", "fd4"):
        return finite_difference_time(data, accuracy=4)
    if method in ("smoothed", "savgol"):
        return smoothed_difference(data, window)
    raise ParameterError(f"unknown differentiation method {method!r}")
