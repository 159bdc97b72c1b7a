"""Modified Pruefer variables built on the Floquet frame.

A real solution y of the perturbed system is written componentwise as
y_j = Im(rho g_j) with rho = (2/omega) (conj(g1) y2 - conj(g2) y1),
R = |rho|, eta = arg rho, theta_j = eta + gamma_j, xi = 2 theta1 + Gamma2.

Evolution under the perturbation V:

    (ln R)' = (V/omega) (|g1|^2 sin 2 theta1 - |g2|^2 sin 2 theta2)
            = (V/omega) Psi sin xi
    theta_j' = gamma_j' - (2V/omega) (|g1|^2 sin^2 theta1 - |g2|^2 sin^2 theta2)
    xi'      = 2k + delta' - (2V/omega) (|g1|^2 - |g2|^2 - Psi cos xi)

The two (ln R)' expressions agree through the identity
|g1|^2 sin 2t1 - |g2|^2 sin 2t2 = Psi sin(2 t1 + Gamma2) when t2 - t1 =
gamma2 - gamma1.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from ._util import cumulative_simpson_uniform
from .errors import NonFiniteState, StepSizeUnderflow, ZeroSolution
from .floquet import DerivedPeriodicData, gamma_derivative
from .periodic_core import IntegratorSpec

__all__ = [
    "PrueferState",
    "to_prufer",
    "from_prufer",
    "prufer_rhs",
    "R_xi_rhs",
    "prufer_system",
    "R_xi_system",
    "RXiRun",
    "integrate_R_xi",
    "write_trajectory_csv",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PrueferState:
    R: float
    eta: float
    theta1: float
    theta2: float
    xi: float


def to_prufer(y, data: DerivedPeriodicData, x: float,
              eta_prev: float | None = None) -> PrueferState:
    """Pruefer variables of the real state y at x.

    eta is placed in (0, 2pi] on a first call; with ``eta_prev`` given it
    is unwrapped onto the branch nearest the previous value.
    """
    g1, g2 = data.g_eval(x)
    rho = (2.0 / data.omega) * (np.conj(g1) * y[1] - np.conj(g2) * y[0])
    R = float(np.abs(rho))
    if not np.isfinite(R) or R < 1e-280:
        raise ZeroSolution("Pruefer radius vanishes; zero solutions carry no phase")
    arg = float(np.angle(rho))
    if eta_prev is None:
        eta = arg if arg > 0.0 else arg + TWO_PI
    else:
        eta = arg + TWO_PI * np.round((eta_prev - arg) / TWO_PI)
    th1 = eta + float(data.gamma1_f(x))
    th2 = eta + float(data.gamma2_f(x))
    xi = 2.0 * th1 + float(data.Gamma2_f(x))
    return PrueferState(R=R, eta=eta, theta1=th1, theta2=th2, xi=xi)


def from_prufer(state: PrueferState, data: DerivedPeriodicData, x: float) -> np.ndarray:
    """Invert the transform: y_j = R |g_j(x)| sin theta_j."""
    a1 = np.sqrt(float(data.u_f(x)))
    a2 = np.sqrt(float(data.v_f(x)))
    return np.array([
        state.R * a1 * np.sin(state.theta1),
        state.R * a2 * np.sin(state.theta2),
    ])


def prufer_rhs(data: DerivedPeriodicData, x, theta1, theta2, V_x):
    """Rates ((ln R)', theta1', theta2') in the two-angle form."""
    u = data.u_f(x)
    v = data.v_f(x)
    g1p, g2p = gamma_derivative(data.sol, data, x)
    w = data.omega
    rlog = (V_x / w) * (u * np.sin(2.0 * theta1) - v * np.sin(2.0 * theta2))
    common = (2.0 * V_x / w) * (u * np.sin(theta1) ** 2 - v * np.sin(theta2) ** 2)
    return rlog, g1p - common, g2p - common


def R_xi_rhs(data: DerivedPeriodicData, x, xi, V_x):
    """Rates ((ln R)', xi') in the single-phase form."""
    u = data.u_f(x)
    v = data.v_f(x)
    Psi = data.Psi_f(x)
    w = data.omega
    rlog = (V_x / w) * Psi * np.sin(xi)
    xip = 2.0 * data.k + data.delta_f.deriv(x) \
        - (2.0 * V_x / w) * (u - v - Psi * np.cos(xi))
    return rlog, xip


def prufer_system(data: DerivedPeriodicData, V):
    """ODE handle for y = (ln R, theta1, theta2) under the perturbation V."""

    def rhs(x, y):
        rlog, t1p, t2p = prufer_rhs(data, x, y[1], y[2], V(x))
        return np.array([rlog, t1p, t2p])

    return rhs


def R_xi_system(data: DerivedPeriodicData, V):
    """ODE handle for y = (ln R, xi) under the perturbation V."""

    def rhs(x, y):
        rlog, xip = R_xi_rhs(data, x, y[1], V(x))
        return np.array([rlog, xip])

    return rhs


def xi_rate(data: DerivedPeriodicData) -> float:
    """Mean angular rate of xi: 2k plus the winding of delta per period."""
    return 2.0 * data.k + data.delta_f.slope


@dataclass
class RXiRun:
    """Result of the long-horizon (ln R, xi) integration.

    ``xs``/``ln_R``/``xi`` are decimated samples (about four per rotation
    of xi); ``ln_R_end`` carries the undecimated cumulative value at x1.
    ``xi_at`` is accurate everywhere; ``ln_R_at`` interpolates samples.
    """

    x0: float
    x1: float
    xs: np.ndarray
    ln_R: np.ndarray
    xi: np.ndarray
    ln_R_end: float
    rate: float
    zeta: object  # PPoly for xi - rate*x
    nfev: int

    def xi_at(self, x):
        return self.zeta(x) + self.rate * np.asarray(x, dtype=float)

    def ln_R_at(self, x):
        return np.interp(x, self.xs, self.ln_R) if self.xs[0] <= self.xs[-1] \
            else np.interp(x, self.xs[::-1], self.ln_R[::-1])


def integrate_R_xi(data: DerivedPeriodicData, V, x0: float, x1: float, xi0: float,
                   spec: IntegratorSpec | None = None, lnR0: float = 0.0,
                   quad_step: float | None = None,
                   keep_step: float | None = None,
                   chunk: int = 4_000_000) -> RXiRun:
    """Integrate xi as a drift variable and recover ln R by quadrature.

    xi never feeds on ln R, so the phase is solved first as
    zeta = xi - rate*x (bounded, well scaled for error control) and
    (ln R)' = (V/omega) Psi sin xi is then accumulated with a fourth-order
    cumulative rule on a uniform grid, in bounded-memory chunks.

    V must accept numpy arrays.
    """
    spec = spec or IntegratorSpec()
    rate = xi_rate(data)
    w = data.omega
    k2 = 2.0 * data.k

    if data.is_constant:
        u0 = float(data.u_f(0.0))
        v0 = float(data.v_f(0.0))
        P0 = float(data.Psi_f(0.0))
        d0 = float(data.delta_f.deriv(0.0))

        def zeta_rhs(x, z):
            xi = z[0] + rate * x
            return [k2 + d0 - rate
                    - (2.0 * V(x) / w) * (u0 - v0 - P0 * np.cos(xi))]
    else:
        def zeta_rhs(x, z):
            xi = z[0] + rate * x
            return [
                k2 + data.delta_f.deriv(x) - rate
                - (2.0 * V(x) / w) * (data.u_f(x) - data.v_f(x)
                                      - data.Psi_f(x) * np.cos(xi))
            ]

    arate = max(abs(rate), 1e-2)
    max_step = min(spec.max_step, 0.5 / arate)
    sol = solve_ivp(zeta_rhs, (x0, x1), [xi0 - rate * x0], method="DOP853",
                    rtol=spec.rel_tol, atol=spec.abs_tol, max_step=max_step)
    if not sol.success:
        raise StepSizeUnderflow(sol.message)
    if not np.all(np.isfinite(sol.y)):
        raise NonFiniteState("phase integration produced non-finite values")

    # Hermite spline through the accepted nodes; slopes from the rhs.
    ts, zs = sol.t, sol.y[0]
    xi_nodes = zs + rate * ts
    if data.is_constant:
        dz = k2 + d0 - rate \
            - (2.0 * np.asarray(V(ts), dtype=float) / w) \
            * (u0 - v0 - P0 * np.cos(xi_nodes))
    else:
        dz = k2 + data.delta_f.deriv(ts) - rate \
            - (2.0 * np.asarray(V(ts), dtype=float) / w) \
            * (data.u_f(ts) - data.v_f(ts) - data.Psi_f(ts) * np.cos(xi_nodes))
    flip = ts[0] > ts[-1]
    if flip:
        ts, zs, dz = ts[::-1], zs[::-1], dz[::-1]
    zeta = CubicHermiteSpline(ts, zs, dz)

    h = quad_step if quad_step is not None else 0.05 / arate
    keep = keep_step if keep_step is not None else np.pi / (2.0 * arate)
    stride = max(1, int(round(keep / h)))

    lo, hi = (x0, x1) if not flip else (x1, x0)
    span = hi - lo
    n_total = max(2, int(np.ceil(span / h)))
    h = span / n_total  # exact uniform grid over the requested range

    xs_out: list[np.ndarray] = []
    ln_out: list[np.ndarray] = []
    # The cumulative rule runs left to right; when integrating downward
    # the anchor lnR0 sits at the right end and is applied afterwards.
    carry = 0.0 if flip else lnR0
    start = 0
    while start < n_total:
        stop = min(start + chunk, n_total)
        idx = np.arange(start, stop + 1)
        xs = lo + idx * h
        xi = zeta(xs) + rate * xs
        f = (np.asarray(V(xs), dtype=float) / w) * data.Psi_f(xs) * np.sin(xi)
        F = cumulative_simpson_uniform(f, h, f0=carry)
        keep_idx = np.arange(0, idx.size, stride)
        if keep_idx[-1] != idx.size - 1:
            keep_idx = np.append(keep_idx, idx.size - 1)
        lastblock = stop >= n_total
        upto = idx.size if lastblock else idx.size - 1
        sel = keep_idx[keep_idx < upto] if not lastblock else keep_idx
        xs_out.append(xs[sel])
        ln_out.append(F[sel])
        carry = F[-1]
        start = stop

    xs_all = np.concatenate(xs_out)
    ln_all = np.concatenate(ln_out)
    if flip:  # ln R(x) = lnR0 - integral from x up to x0; reorder x0 -> x1
        ln_all = ln_all + (lnR0 - carry)
        ln_end = lnR0 - carry
        xs_all, ln_all = xs_all[::-1], ln_all[::-1]
    else:
        ln_end = carry
    xi_samples = zeta(xs_all) + rate * xs_all
    return RXiRun(x0=x0, x1=x1, xs=xs_all, ln_R=ln_all, xi=xi_samples,
                  ln_R_end=float(ln_end), rate=rate, zeta=zeta, nfev=sol.nfev)


def write_trajectory_csv(path, xs, R, eta, theta1, theta2, xi) -> None:
    """Fixed-format trajectory CSV: x, R, ln_R, eta, theta1, theta2, xi."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,R,ln_R,eta,theta1,theta2,xi\n")
        for row in zip(xs, R, np.log(R), eta, theta1, theta2, xi):
            fh.write(",".join(f"{val:.17g}" for val in row) + "\n")
