"""Small numerical helpers: periodic splines, cumulative Simpson, windows."""

from __future__ import annotations

import numpy as np
from scipy.interpolate import CubicSpline


def frac(x):
    """Fractional part x - floor(x), mapping any float onto [0, 1)."""
    return x - np.floor(x)


class PeriodicSpline:
    """Cubic spline with period 1 plus an optional linear winding term.

    Represents f(x) = slope*x + s(frac(x)) where s is a periodic cubic
    spline on [0, 1].  The derivative slope + s'(frac(x)) is periodic.
    """

    def __init__(self, grid: np.ndarray, values: np.ndarray, slope: float = 0.0):
        vals = np.asarray(values, dtype=float).copy()
        mism = abs(vals[-1] - vals[0])
        scale = 1.0 + np.max(np.abs(vals))
        if mism > 1e-6 * scale:
            raise ValueError(f"periodic data mismatch at endpoints: {mism:.3e}")
        vals[-1] = vals[0]
        self.slope = float(slope)
        self._sp = CubicSpline(grid, vals, bc_type="periodic")
        self._dsp = self._sp.derivative()

    def __call__(self, x):
        return self.slope * x + self._sp(frac(x))

    def deriv(self, x):
        return self.slope + self._dsp(frac(x))

    def mean(self) -> float:
        """Period average (winding slope excluded)."""
        return float(self._sp.integrate(0.0, 1.0))


class ConstantField:
    """Callable mimicking PeriodicSpline for an x-independent quantity."""

    def __init__(self, value: float):
        self.value = float(value)
        self.slope = 0.0

    def __call__(self, x):
        return np.full_like(np.asarray(x, dtype=float), self.value) \
            if np.ndim(x) else self.value

    def deriv(self, x):
        return np.zeros_like(np.asarray(x, dtype=float)) if np.ndim(x) else 0.0

    def mean(self) -> float:
        return self.value


def cumulative_simpson_uniform(f: np.ndarray, h: float, f0: float = 0.0) -> np.ndarray:
    """Cumulative integral of samples ``f`` on a uniform grid of spacing ``h``.

    Composite Simpson on even indices; odd indices use the local cubic
    (Newton three-point) rule, so the result is O(h^4) accurate at every
    grid point.  ``f0`` is the integral value at the first sample.
    """
    f = np.asarray(f, dtype=float)
    n = f.size
    out = np.empty(n)
    out[0] = f0
    if n == 1:
        return out
    if n == 2:  # single interval: trapezoid
        out[1] = f0 + 0.5 * h * (f[0] + f[1])
        return out
    npairs = (n - 1) // 2
    a = f[0 : 2 * npairs - 1 : 2]
    b = f[1 : 2 * npairs : 2]
    c = f[2 : 2 * npairs + 1 : 2]
    even = f0 + np.cumsum(h / 3.0 * (a + 4.0 * b + c))
    out[2 : 2 * npairs + 1 : 2] = even
    # odd points: integrate over [x_{2i}, x_{2i+1}] with the quadratic
    # through (2i, 2i+1, 2i+2)
    left = np.empty(npairs)
    left[0] = f0
    left[1:] = even[:-1]
    out[1 : 2 * npairs : 2] = left + h / 12.0 * (5.0 * a + 8.0 * b - c)
    if n % 2 == 0:  # trailing point after the last full pair
        out[-1] = out[-2] + h / 12.0 * (-f[-3] + 8.0 * f[-2] + 5.0 * f[-1])
    return out


def smoothstep(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1, exp(-1/t) blend between."""
    t = np.asarray(t, dtype=float)
    out = np.zeros_like(t)
    out[t >= 1.0] = 1.0
    mid = (t > 0.0) & (t < 1.0)
    tm = t[mid]
    a = np.exp(-1.0 / tm)
    b = np.exp(-1.0 / (1.0 - tm))
    out[mid] = a / (a + b)
    return out if out.ndim else float(out)


def taper_window(x, lo: float, hi: float, width: float):
    """C-infinity window: 0 outside (lo, hi), 1 on [lo+width, hi-width]."""
    x = np.asarray(x, dtype=float)
    return smoothstep((x - lo) / width) * smoothstep((hi - x) / width)


def fit_line(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and intercept of y against x."""
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)
