"""Floquet data for the periodic system: monodromy, bands, and the complex
solution g with g(x+1) = exp(i k) g(x).

Conventions fixed here and used everywhere downstream:

* k = arccos(trace/2) in (0, pi) strictly inside a band; g is built from
  the monodromy eigenvector of the eigenvalue exp(+i k), so the Floquet
  condition holds with that k.
* omega = 2 Im(conj(g1) g2) is the (constant) Wronskian invariant of the
  conjugate pair; its sign is a property of the band and is kept as-is.
* gamma_j = unwrapped arg g_j = kx + phi_j with phi_j periodic mod 2pi;
  Gamma1 = 2 gamma2 - 2 gamma1;
  Psi = sqrt(|g1|^4 + |g2|^4 - 2 |g1|^2 |g2|^2 cos Gamma1) > 0;
  Gamma2 solves sin Gamma2 = -|g2|^2 sin Gamma1 / Psi,
                cos Gamma2 = (|g1|^2 - |g2|^2 cos Gamma1) / Psi;
  delta = 2 phi1 + Gamma2.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from ._util import ConstantField, PeriodicSpline
from .errors import (
    BandEdge,
    DegenerateEigenvector,
    ScanTooCoarse,
    UnwrapJump,
)
from .periodic_core import (
    IntegratorSpec,
    PeriodicCoefficient,
    eval_coefficient,
    integrate,
)

__all__ = [
    "Monodromy",
    "GapIndicator",
    "Band",
    "BandStructure",
    "FloquetSolution",
    "DerivedPeriodicData",
    "monodromy",
    "quasimomentum",
    "band_scan",
    "floquet_solution",
    "derived_data",
    "gamma_derivative",
    "in_band_samples",
    "write_period_csv",
]

TWO_PI = 2.0 * np.pi


def _matrix_rhs(p: PeriodicCoefficient, q: PeriodicCoefficient, lam: float):
    """System for the fundamental matrix, flattened row-major to length 4."""

    def rhs(x, Y):
        pv = eval_coefficient(p, x)
        qv = eval_coefficient(q, x)
        a11, a12 = -qv, lam + pv
        a21, a22 = pv - lam, qv
        return np.array(
            [
                a11 * Y[0] + a12 * Y[2],
                a11 * Y[1] + a12 * Y[3],
                a21 * Y[0] + a22 * Y[2],
                a21 * Y[1] + a22 * Y[3],
            ]
        )

    return rhs


@dataclass(frozen=True)
class Monodromy:
    """Period map of the system at spectral parameter lam."""

    lam: float
    matrix: np.ndarray

    def __post_init__(self):
        det = float(np.linalg.det(self.matrix))
        if abs(det - 1.0) > 1e-8:
            raise ValueError(f"monodromy determinant {det} deviates from 1")

    @property
    def trace(self) -> float:
        return float(self.matrix[0, 0] + self.matrix[1, 1])


@dataclass(frozen=True)
class GapIndicator:
    """Marks lam outside a band; excess = |trace|/2 - 1 >= 0."""

    lam: float
    excess: float


def monodromy(p: PeriodicCoefficient, q: PeriodicCoefficient, lam: float,
              spec: IntegratorSpec | None = None) -> Monodromy:
    """Integrate the fundamental matrix over one period."""
    traj = integrate(_matrix_rhs(p, q, lam), 0.0, 1.0, np.eye(2).ravel(), spec)
    return Monodromy(lam=lam, matrix=traj.ys[-1].reshape(2, 2))


def quasimomentum(m: Monodromy):
    """arccos(trace/2) in [0, pi] inside a band, else a GapIndicator."""
    half = m.trace / 2.0
    if abs(half) <= 1.0:
        return float(np.arccos(half))
    return GapIndicator(lam=m.lam, excess=abs(half) - 1.0)


@dataclass(frozen=True)
class Band:
    lo: float
    hi: float
    k_direction: int  # +1 if k increases with lam across the band, else -1


@dataclass
class BandStructure:
    scan_range: tuple[float, float]
    resolution: float
    lambdas: np.ndarray
    traces: np.ndarray
    bands: list[Band]

    @property
    def edges(self) -> list[float]:
        out = []
        lo, hi = self.scan_range
        for b in self.bands:
            if b.lo > lo:
                out.append(b.lo)
            if b.hi < hi:
                out.append(b.hi)
        return out


def band_scan(p: PeriodicCoefficient, q: PeriodicCoefficient,
              lambda_range: tuple[float, float], resolution: float,
              spec: IntegratorSpec | None = None,
              _trace_fn=None) -> BandStructure:
    """Scan trace(lam), bracket |trace|/2 - 1 sign changes, bisect the edges.

    Tangential touchings of |trace|/2 = 1 (closed gaps) count as interior.
    Raises ScanTooCoarse when in/out status flips twice across adjacent
    grid points, which indicates a feature narrower than two strides.
    """
    lo, hi = map(float, lambda_range)
    if hi <= lo:
        return BandStructure((lo, hi), resolution, np.array([]), np.array([]), [])
    if _trace_fn is None:
        _trace_fn = lambda lam: monodromy(p, q, lam, spec).trace  # noqa: E731
    n = max(2, int(round((hi - lo) / resolution)) + 1)
    lams = np.linspace(lo, hi, n)
    traces = np.array([_trace_fn(lam) for lam in lams])
    inside = np.abs(traces) / 2.0 < 1.0 + 1e-12

    for i in range(1, len(inside) - 1):
        if inside[i - 1] != inside[i] and inside[i] != inside[i + 1]:
            raise ScanTooCoarse(
                f"band/gap narrower than two strides near lambda={lams[i]:.6g}"
            )

    def edge_between(a: float, b: float) -> float:
        # a carries the outside sample, b the inside one; the pair may
        # arrive in either x-order.
        fa = abs(_trace_fn(a)) / 2.0 - 1.0
        for _ in range(64):
            mid = 0.5 * (a + b)
            if abs(b - a) <= resolution * 1e-3:
                break
            fm = abs(_trace_fn(mid)) / 2.0 - 1.0
            if (fa <= 0.0) == (fm <= 0.0):
                a, fa = mid, fm
            else:
                b = mid
        return 0.5 * (a + b)

    bands: list[Band] = []
    i = 0
    while i < n:
        if not inside[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and inside[j + 1]:
            j += 1
        b_lo = lams[i] if i == 0 else edge_between(lams[i - 1], lams[i])
        b_hi = lams[j] if j == n - 1 else edge_between(lams[j + 1], lams[j])
        mid = 0.5 * (b_lo + b_hi)
        h = max(1e-6, min(resolution, (b_hi - b_lo) / 8.0) / 2.0)
        k_lo = np.arccos(np.clip(_trace_fn(mid - h) / 2.0, -1.0, 1.0))
        k_hi = np.arccos(np.clip(_trace_fn(mid + h) / 2.0, -1.0, 1.0))
        bands.append(Band(b_lo, b_hi, 1 if k_hi >= k_lo else -1))
        i = j + 1
    return BandStructure((lo, hi), resolution, lams, traces, bands)


def _unwrap_guard(raw_angles: np.ndarray, what: str) -> np.ndarray:
    """Unwrap a dense angle sequence, refusing jumps >= pi/2 per step."""
    d = np.diff(raw_angles)
    d = (d + np.pi) % TWO_PI - np.pi
    if d.size and np.max(np.abs(d)) >= np.pi / 2.0:
        raise UnwrapJump(f"{what}: phase step {np.max(np.abs(d)):.3f} >= pi/2; refine grid")
    return raw_angles[0] + np.concatenate(([0.0], np.cumsum(d)))


@dataclass
class FloquetSolution:
    """g on the period grid plus the data needed to evaluate it anywhere."""

    p: PeriodicCoefficient
    q: PeriodicCoefficient
    lam: float
    k: float
    omega: float
    grid: np.ndarray
    g1: np.ndarray
    g2: np.ndarray
    mono: Monodromy
    eigvec: np.ndarray
    spec: IntegratorSpec = field(default_factory=IntegratorSpec)


def floquet_solution(p: PeriodicCoefficient, q: PeriodicCoefficient, lam: float,
                     spec: IntegratorSpec | None = None, n_grid: int = 4096,
                     band_edge_margin: float = 0.0) -> FloquetSolution:
    """Build g(x) = Phi(x) v on a uniform period grid of n_grid+1 points.

    v is the monodromy eigenvector for exp(+i k), unit norm, first
    significant component rotated real-positive.  Raises BandEdge outside
    (or too near the edge of) a band and DegenerateEigenvector when the
    eigenpair cannot be resolved.

    The unit-cell solve is cheap, and the invariant gates below (omega
    constancy, Floquet condition at 1e-8) demand more accuracy than the
    long-horizon tolerances callers typically carry, so the requested
    tolerances are clamped to at most 1e-10 / 1e-12 here.  The spec
    stored on the result is the effective (clamped) one.
    """
    spec = spec or IntegratorSpec()
    if spec.rel_tol > 1e-10 or spec.abs_tol > 1e-12:
        spec = replace(spec, rel_tol=min(spec.rel_tol, 1e-10),
                       abs_tol=min(spec.abs_tol, 1e-12))
    grid = np.linspace(0.0, 1.0, n_grid + 1)
    traj = integrate(_matrix_rhs(p, q, lam), 0.0, 1.0, np.eye(2).ravel(), spec,
                     t_eval=grid)
    mats = traj.ys  # (n+1, 4) rows [Y00, Y01, Y10, Y11]
    mono = Monodromy(lam=lam, matrix=mats[-1].reshape(2, 2))
    half = mono.trace / 2.0
    if abs(half) >= 1.0:
        raise BandEdge(f"lambda={lam} lies in a gap or at an edge "
                       f"(|trace|/2 = {abs(half):.6f})")
    k = float(np.arccos(half))
    if band_edge_margin > 0.0 and not (band_edge_margin < k < np.pi - band_edge_margin):
        raise BandEdge(f"k={k:.4f} within {band_edge_margin} of a band edge")

    w, vecs = np.linalg.eig(mono.matrix)
    idx = int(np.argmax(w.imag))
    if w[idx].imag <= 1e-12:
        raise DegenerateEigenvector(f"monodromy eigenvalues {w} nearly real")
    v = vecs[:, idx].astype(complex)
    v /= np.linalg.norm(v)
    j = 0 if abs(v[0]) > 1e-8 else 1
    v *= np.conj(v[j]) / abs(v[j])

    g1 = mats[:, 0] * v[0] + mats[:, 1] * v[1]
    g2 = mats[:, 2] * v[0] + mats[:, 3] * v[1]

    omega_grid = 2.0 * np.imag(np.conj(g1) * g2)
    omega = float(np.mean(omega_grid))
    scale = float(np.max(np.abs(g1) ** 2 + np.abs(g2) ** 2))
    if abs(omega) < 1e-10 * scale:
        raise DegenerateEigenvector("Wronskian invariant omega vanishes")
    if np.max(np.abs(omega_grid - omega)) > 1e-8 * max(1.0, abs(omega)):
        raise DegenerateEigenvector("omega fails to stay constant on the grid")

    mult = np.exp(1j * k)
    err = np.abs(np.array([g1[-1], g2[-1]]) - mult * np.array([g1[0], g2[0]]))
    if np.max(err) > 1e-8 * max(1.0, float(np.hypot(abs(g1[0]), abs(g2[0])))):
        raise DegenerateEigenvector("Floquet condition g(1) = e^{ik} g(0) failed")
    if min(np.min(np.abs(g1)), np.min(np.abs(g2))) <= 0.0:
        raise DegenerateEigenvector("a component of g vanishes on the grid")

    return FloquetSolution(p=p, q=q, lam=lam, k=k, omega=omega, grid=grid,
                           g1=g1, g2=g2, mono=mono, eigvec=v, spec=spec)


@dataclass
class DerivedPeriodicData:
    """Phase/modulus functions of g on the period grid, with evaluators.

    Evaluators are periodic cubic splines (plus exact winding slopes), so
    every quantity extends to all real x through the Floquet structure.
    """

    sol: FloquetSolution
    x: np.ndarray
    u: np.ndarray            # |g1|^2
    v: np.ndarray            # |g2|^2
    gamma1: np.ndarray
    gamma2: np.ndarray
    phi1: np.ndarray
    phi2: np.ndarray
    Gamma1: np.ndarray
    Psi: np.ndarray
    Gamma2: np.ndarray
    delta: np.ndarray
    u_f: object
    v_f: object
    Psi_f: object
    gamma1_f: object
    gamma2_f: object
    Gamma2_f: object
    delta_f: object
    Psi_mean: float
    is_constant: bool

    @property
    def k(self) -> float:
        return self.sol.k

    @property
    def omega(self) -> float:
        return self.sol.omega

    @property
    def lam(self) -> float:
        return self.sol.lam

    def g_eval(self, x):
        """g at arbitrary x via the periodic moduli and winding phases."""
        g1 = np.sqrt(self.u_f(x)) * np.exp(1j * self.gamma1_f(x))
        g2 = np.sqrt(self.v_f(x)) * np.exp(1j * self.gamma2_f(x))
        return g1, g2

    def delta_deriv(self, x):
        return self.delta_f.deriv(x)


class _LinearField:
    """slope*x + const; periodic part of a winding phase that is constant."""

    def __init__(self, const: float, slope: float):
        self.const, self.slope = float(const), float(slope)

    def __call__(self, x):
        return self.slope * np.asarray(x, dtype=float) + self.const \
            if np.ndim(x) else self.slope * x + self.const

    def deriv(self, x):
        return np.full(np.shape(x), self.slope) if np.ndim(x) else self.slope

    def mean(self) -> float:
        return self.const


def _make_field(grid, values, slope=0.0, force_const=False):
    values = np.asarray(values, dtype=float)
    spread = np.max(values) - np.min(values)
    if force_const or spread < 1e-12 * max(1.0, np.max(np.abs(values))):
        const = float(np.mean(values))
        return _LinearField(const, slope) if slope != 0.0 else ConstantField(const)
    return PeriodicSpline(grid, values, slope=slope)


def derived_data(sol: FloquetSolution) -> DerivedPeriodicData:
    """Moduli, unwrapped phases, and the coupling phases Gamma1/Gamma2/delta."""
    x = sol.grid
    u = np.abs(sol.g1) ** 2
    v = np.abs(sol.g2) ** 2
    gamma1 = _unwrap_guard(np.angle(sol.g1), "gamma1")
    gamma2 = _unwrap_guard(np.angle(sol.g2), "gamma2")
    k = sol.k

    Gamma1 = 2.0 * gamma2 - 2.0 * gamma1
    Psi = np.sqrt(u ** 2 + v ** 2 - 2.0 * u * v * np.cos(Gamma1))
    if np.min(Psi) <= 0.0:
        raise DegenerateEigenvector("Psi vanishes on the grid")
    Gamma2 = _unwrap_guard(np.arctan2(-v * np.sin(Gamma1), u - v * np.cos(Gamma1)),
                           "Gamma2")
    phi1 = gamma1 - k * x
    phi2 = gamma2 - k * x
    delta = 2.0 * phi1 + Gamma2

    def winding(arr, step):
        w = (arr[-1] - arr[0] - step) / TWO_PI
        m = int(round(w))
        if abs(w - m) > 1e-6:
            raise UnwrapJump(f"non-integer winding {w} in periodic phase")
        return m

    m1 = winding(gamma1, k)
    m2 = winding(gamma2, k)
    w_G2 = winding(Gamma2, 0.0)
    w_delta = 2 * m1 + w_G2

    const = sol.p.is_constant and sol.q.is_constant
    data = DerivedPeriodicData(
        sol=sol, x=x, u=u, v=v, gamma1=gamma1, gamma2=gamma2,
        phi1=phi1, phi2=phi2, Gamma1=Gamma1, Psi=Psi, Gamma2=Gamma2, delta=delta,
        u_f=_make_field(x, u, force_const=const),
        v_f=_make_field(x, v, force_const=const),
        Psi_f=_make_field(x, Psi, force_const=const),
        gamma1_f=_make_field(x, gamma1 - (k + TWO_PI * m1) * x,
                             slope=k + TWO_PI * m1, force_const=const),
        gamma2_f=_make_field(x, gamma2 - (k + TWO_PI * m2) * x,
                             slope=k + TWO_PI * m2, force_const=const),
        Gamma2_f=_make_field(x, Gamma2 - TWO_PI * w_G2 * x,
                             slope=TWO_PI * w_G2, force_const=const),
        delta_f=_make_field(x, delta - TWO_PI * w_delta * x,
                            slope=TWO_PI * w_delta, force_const=const),
        Psi_mean=float(np.trapezoid(Psi, x)),
        is_constant=const,
    )
    return data


def gamma_derivative(sol: FloquetSolution, data: DerivedPeriodicData, x):
    """Exact phase velocities:
    gamma1' = omega (lam + p) / (2 |g1|^2),  gamma2' = omega (lam - p) / (2 |g2|^2).
    """
    pv = eval_coefficient(sol.p, x)
    return (
        sol.omega * (sol.lam + pv) / (2.0 * data.u_f(x)),
        sol.omega * (sol.lam - pv) / (2.0 * data.v_f(x)),
    )


def in_band_samples(p: PeriodicCoefficient, q: PeriodicCoefficient,
                    window: tuple[float, float], count: int,
                    spec: IntegratorSpec | None = None,
                    margin: float = 0.1, cap: float = 0.9,
                    probe: int = 60) -> list[float]:
    """Scan a coarse lambda grid and return up to ``count`` values strictly
    inside bands (|trace|/2 <= cap and k at least ``margin`` from 0, pi)."""
    lams = np.linspace(window[0], window[1], probe)
    good = []
    for lam in lams:
        t = monodromy(p, q, float(lam), spec).trace / 2.0
        if abs(t) <= cap:
            k = float(np.arccos(t))
            if margin < k < np.pi - margin:
                good.append(float(lam))
    if len(good) <= count:
        return good
    idx = np.linspace(0, len(good) - 1, count).round().astype(int)
    return [good[i] for i in idx]


def write_period_csv(data: DerivedPeriodicData, path) -> None:
    """Fixed-format CSV of the period-grid data (17 significant digits)."""
    cols = [
        ("x", data.x),
        ("re_g1", data.sol.g1.real), ("im_g1", data.sol.g1.imag),
        ("re_g2", data.sol.g2.real), ("im_g2", data.sol.g2.imag),
        ("abs_g1", np.abs(data.sol.g1)), ("abs_g2", np.abs(data.sol.g2)),
        ("gamma1", data.gamma1), ("gamma2", data.gamma2),
        ("Gamma1", data.Gamma1), ("Psi", data.Psi),
        ("Gamma2", data.Gamma2), ("delta", data.delta),
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(",".join(name for name, _ in cols) + "\n")
        arrays = [arr for _, arr in cols]
        for row in zip(*arrays):
            fh.write(",".join(f"{val:.17g}" for val in row) + "\n")
