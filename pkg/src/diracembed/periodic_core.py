"""Periodic coefficients and the first-order system for the 1D Dirac operator.

The operator acts on pairs y = (y1, y2) as

    L y = J y' + P(x) y,   J = [[0, -1], [1, 0]],
    P(x) = [[p(x) + V(x), q(x)], [q(x), -p(x) - V(x)]],

with p, q real and 1-periodic and V a decaying perturbation.  Writing
L y = lam * y componentwise gives the system integrated here:

    y1' = -q(x) y1 + (lam + p(x) + V(x)) y2
    y2' = (p(x) + V(x) - lam) y1 + q(x) y2

In the free case (p = q = V = 0) the flow is the clockwise rotation
y1 + i y2 -> exp(-i lam x) (y1(0) + i y2(0)).  The coefficient matrix is
trace-free, so Wronskians of solution pairs are constants of motion.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from ._util import frac
from .errors import NonFiniteState, StepSizeUnderflow

__all__ = [
    "PeriodicCoefficient",
    "IntegratorSpec",
    "Trajectory",
    "eval_coefficient",
    "unperturbed_rhs",
    "perturbed_rhs",
    "integrate",
    "sample_grid",
]


@dataclass(frozen=True)
class PeriodicCoefficient:
    """Truncated Fourier series a0/2 + sum_n (cos_n cos 2pi n x + sin_n sin 2pi n x)."""

    a0: float = 0.0
    cos: tuple[float, ...] = ()
    sin: tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "cos", tuple(float(c) for c in self.cos))
        object.__setattr__(self, "sin", tuple(float(s) for s in self.sin))
        object.__setattr__(self, "a0", float(self.a0))
        vals = (self.a0,) + self.cos + self.sin
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("coefficient series must be finite")

    @property
    def is_constant(self) -> bool:
        return not any(self.cos) and not any(self.sin)

    @property
    def bound(self) -> float:
        """Upper bound for |value| over a period."""
        return abs(self.a0) / 2.0 + sum(map(abs, self.cos)) + sum(map(abs, self.sin))

    def to_dict(self) -> dict:
        return {"a0": self.a0, "cos": list(self.cos), "sin": list(self.sin)}

    @classmethod
    def from_dict(cls, d: dict) -> "PeriodicCoefficient":
        return cls(d.get("a0", 0.0), tuple(d.get("cos", ())), tuple(d.get("sin", ())))


def eval_coefficient(coeff: PeriodicCoefficient, x):
    """Evaluate the series at x (scalar or array).

    The argument is reduced to its fractional part first, so values at x
    and x + 1 agree exactly, not just to rounding of 2*pi*(x+1).
    """
    t = frac(np.asarray(x, dtype=float))
    out = np.full_like(t, coeff.a0 / 2.0)
    for n, c in enumerate(coeff.cos, start=1):
        if c:
            out += c * np.cos(2.0 * np.pi * n * t)
    for n, s in enumerate(coeff.sin, start=1):
        if s:
            out += s * np.sin(2.0 * np.pi * n * t)
    return out if out.ndim else float(out)


def unperturbed_rhs(p: PeriodicCoefficient, q: PeriodicCoefficient, lam: float):
    """Right-hand side handle for the periodic system at spectral parameter lam."""

    def rhs(x, y):
        pv = eval_coefficient(p, x)
        qv = eval_coefficient(q, x)
        return np.array(
            [
                -qv * y[0] + (lam + pv) * y[1],
                (pv - lam) * y[0] + qv * y[1],
            ]
        )

    return rhs


def perturbed_rhs(p: PeriodicCoefficient, q: PeriodicCoefficient, lam: float, V):
    """Same system with the decaying diagonal perturbation V(x) added to p."""

    def rhs(x, y):
        pv = eval_coefficient(p, x) + V(x)
        qv = eval_coefficient(q, x)
        return np.array(
            [
                -qv * y[0] + (lam + pv) * y[1],
                (pv - lam) * y[0] + qv * y[1],
            ]
        )

    return rhs


@dataclass(frozen=True)
class IntegratorSpec:
    """Tolerances and sampling policy for the adaptive integrator."""

    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    dense_output_stride: float = 1e-2

    def __post_init__(self):
        if not (0.0 < self.rel_tol <= 1e-4):
            raise ValueError("rel_tol must lie in (0, 1e-4]")
        if not (0.0 < self.abs_tol <= 1e-4):
            raise ValueError("abs_tol must lie in (0, 1e-4]")
        if not self.max_step > 0.0:
            raise ValueError("max_step must be positive")
        if not self.dense_output_stride > 0.0:
            raise ValueError("dense_output_stride must be positive")


@dataclass
class Trajectory:
    """Adaptive solution with dense evaluation between the recorded nodes."""

    xs: np.ndarray
    ys: np.ndarray  # shape (len(xs), dim)
    x0: float
    x1: float
    dense: object = field(repr=False, default=None)
    nfev: int = 0

    def at(self, x):
        """Dense-output evaluation; accepts scalars or arrays."""
        vals = self.dense(x)
        return np.asarray(vals).T  # (n, dim) for array input, (dim,) for scalar


def integrate(rhs, x0: float, x1: float, y0, spec: IntegratorSpec | None = None,
              t_eval=None) -> Trajectory:
    """Integrate y' = rhs(x, y) from x0 to x1 with an 8th-order adaptive scheme.

    Raises NonFiniteState if the state leaves the finite range and
    StepSizeUnderflow if the step controller stalls.
    """
    spec = spec or IntegratorSpec()
    y0 = np.asarray(y0, dtype=float)
    if not np.all(np.isfinite(y0)):
        raise NonFiniteState("initial state is not finite")
    if x1 == x0:
        xs = np.array([x0])
        ys = y0[None, :].copy()
        traj = Trajectory(xs=xs, ys=ys, x0=x0, x1=x1, nfev=0)
        traj.dense = lambda x: np.broadcast_to(
            y0[:, None], (y0.size, np.size(x))
        ).squeeze() if np.ndim(x) else y0
        return traj

    sol = solve_ivp(
        rhs,
        (x0, x1),
        y0,
        method="DOP853",
        rtol=spec.rel_tol,
        atol=spec.abs_tol,
        max_step=spec.max_step,
        dense_output=True,
        t_eval=t_eval,
    )
    if not sol.success:
        last = np.asarray(sol.y[:, -1]) if sol.y.size else y0
        if not np.all(np.isfinite(last)) or np.max(np.abs(last)) > 1e100:
            raise NonFiniteState(f"state not finite near x={sol.t[-1] if sol.t.size else x0}")
        raise StepSizeUnderflow(sol.message)
    if not np.all(np.isfinite(sol.y)):
        raise NonFiniteState("integration produced non-finite samples")
    return Trajectory(
        xs=sol.t, ys=sol.y.T, x0=x0, x1=x1, dense=sol.sol, nfev=sol.nfev
    )


def sample_grid(x0: float, x1: float, stride: float, rel: float = 1e-2,
                pivot: float = 100.0) -> np.ndarray:
    """Export grid: uniform stride near the origin, geometric of ratio 1+rel
    once |x| exceeds ``pivot`` so storage stays linear in the log-range."""
    if x1 <= x0:
        raise ValueError("need x1 > x0")
    lo, hi = x0, x1
    parts = []
    if lo < pivot:
        top = min(hi, pivot)
        n = max(2, int(np.ceil((top - lo) / stride)) + 1)
        parts.append(np.linspace(lo, top, n))
        lo = top
    if hi > lo:
        start = max(lo, pivot)
        ratio = 1.0 + rel
        n = int(np.ceil(np.log(hi / start) / np.log(ratio))) + 1
        geo = start * ratio ** np.arange(n + 1)
        geo = geo[geo < hi]
        parts.append(np.append(geo, hi))
    xs = np.concatenate(parts) if len(parts) > 1 else parts[0]
    return np.unique(xs)
