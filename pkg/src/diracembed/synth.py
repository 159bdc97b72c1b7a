"""Synthesis of slowly decaying potentials that force power-law decay.

Each potential piece is phase-locked to one target energy: the phase
xi obeys the closed equation

    xi' = 2k + delta'(x) + (2 C sin xi / (x - b_s)) (|g1|^2 - |g2|^2 - Psi cos xi)

(b_s = +b on the plus side, -b on the minus side, x signed) and the
piece potential is V(x) = -omega C w(x) sin xi(x) / (x - b_s), where w
is the smoothing window (1 when untapered; the window also multiplies
the coupling term above, keeping V slaved to the phase).  Along the
solution the drive satisfies (ln R)' = -(C Psi w sin^2 xi)/(x - b_s), so
the tracked amplitude decays like ((|x|-b)/(a-b))^(-C Psi_mean / 2) on
its own pieces while every non-resonant neighbour is disturbed only by
a bounded factor.  A round-robin schedule alternates pieces among the
targets so that all tracked amplitudes fall geometrically per cycle.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.interpolate import CubicHermiteSpline

from ._util import cumulative_simpson_uniform, taper_window
from .errors import (
    EnvelopeTooLarge,
    EnvelopeViolation,
    HorizonTooShort,
    NonFiniteState,
    OverlapDetected,
    PieceTooShort,
    ResonantPair,
    StabilityViolated,
    StepSizeUnderflow,
)
from .floquet import DerivedPeriodicData, FloquetSolution, derived_data, floquet_solution
from .periodic_core import IntegratorSpec, PeriodicCoefficient
from .pruefer import integrate_R_xi, xi_rate

__all__ = [
    "EmbeddingTarget",
    "check_nonresonance",
    "choose_C",
    "XiTrajectory",
    "solve_xi",
    "PotentialPiece",
    "piece_potential",
    "smooth_compact",
    "slaved_amplitude",
    "SynthesisSchedule",
    "TrackRecord",
    "probe_constants",
    "schedule",
    "SynthesizedPotential",
    "assemble",
    "write_manifest",
    "rebuild_potential",
    "write_potential_csv",
]

TWO_PI = 2.0 * np.pi
DECAY_EXPONENT = 100.0  # target slope of ln R against ln((|x|-b)/(a-b))


@dataclass(frozen=True)
class EmbeddingTarget:
    """One energy to embed: Floquet frame plus its decay constant."""

    lam: float
    k: float
    floquet: FloquetSolution
    data: DerivedPeriodicData
    C: float
    omega: float

    def __post_init__(self):
        if not 0.0 < self.k < np.pi:
            raise ValueError(f"quasimomentum {self.k} outside (0, pi)")
        if self.omega == 0.0 or not np.isfinite(self.omega):
            raise ValueError("wronskian omega must be nonzero and finite")
        floor = 2.0 * (DECAY_EXPONENT + 1.0) / self.data.Psi_mean
        if self.C < floor - 1e-12:
            raise ValueError(
                f"decay constant C={self.C} below {floor:.6g}; "
                "the certified slope needs C >= 2*(100+1)/Psi_mean")

    @property
    def envelope(self) -> float:
        """Peak of |V|*(|x|-b) over any piece: |omega|*C."""
        return abs(self.omega) * self.C


def choose_C(data: DerivedPeriodicData, rho_margin: float = 5.0) -> float:
    """Decay constant giving slope -(100 + rho_margin) for this frame."""
    if rho_margin <= 0.0:
        raise ValueError("rho_margin must be positive")
    return 2.0 * (DECAY_EXPONENT + rho_margin) / data.Psi_mean


def check_nonresonance(lambdas, p: PeriodicCoefficient, q: PeriodicCoefficient,
                       margin: float = 0.05, *, rho_margin: float = 5.0,
                       spec: IntegratorSpec | None = None,
                       band_edge_margin: float = 0.0,
                       n_grid: int = 4096) -> list[EmbeddingTarget]:
    """Build targets for the given energies, enforcing phase separation.

    Requires |k_i - k_j| >= margin for i != j and |k_i + k_j - pi| >=
    margin for all pairs including i == j (which rules out k = pi/2).
    """
    if margin <= 0.0:
        raise ValueError("margin must be positive")
    lams = [float(l) for l in lambdas]
    if not lams:
        raise ValueError("no energies given")
    targets = []
    for lam in lams:
        sol = floquet_solution(p, q, lam, spec=spec, n_grid=n_grid,
                               band_edge_margin=band_edge_margin)
        data = derived_data(sol)
        targets.append(EmbeddingTarget(
            lam=lam, k=sol.k, floquet=sol, data=data,
            C=choose_C(data, rho_margin), omega=sol.omega))
    ks = [t.k for t in targets]
    for i in range(len(ks)):
        for j in range(i, len(ks)):
            if i != j and abs(ks[i] - ks[j]) < margin:
                raise ResonantPair(i, j, "k_i - k_j", abs(ks[i] - ks[j]))
            s = abs(ks[i] + ks[j] - np.pi)
            if s < margin:
                raise ResonantPair(i, j, "k_i + k_j - pi", s)
    return targets


@dataclass
class XiTrajectory:
    """Dense solution of the phase-lock equation on one piece."""

    side: int
    a: float
    b: float
    x_end: float
    xi0: float
    C: float
    rate: float
    zeta: object  # PPoly of xi - rate*x over [x_lo, x_hi]
    nodes_x: np.ndarray
    nodes_xi: np.ndarray
    nfev: int
    taper_width: float = 0.0
    spec: IntegratorSpec | None = None

    @property
    def x_lo(self) -> float:
        return self.a if self.side > 0 else -self.x_end

    @property
    def x_hi(self) -> float:
        return self.x_end if self.side > 0 else -self.a

    def xi_at(self, x):
        return self.zeta(x) + self.rate * np.asarray(x, dtype=float)


def solve_xi(target: EmbeddingTarget, a: float, b: float, xi0: float,
             x_end: float, side: int = 1,
             spec: IntegratorSpec | None = None,
             C: float | None = None,
             taper_width: float = 0.0) -> XiTrajectory:
    """Integrate the phase-lock equation outward from |x| = a.

    The phase is solved as zeta = xi - rate*x so the state stays bounded
    over long pieces.  xi0 is reduced modulo 2*pi.  A positive
    taper_width multiplies the coupling term by the C-infinity window
    vanishing at both edges, so a tapered potential built from this
    trajectory stays exactly slaved to its own decaying solution.
    """
    if side not in (1, -1):
        raise ValueError("side must be +1 or -1")
    if not 0.0 <= b < a:
        raise ValueError(f"need 0 <= b < a, got b={b}, a={a}")
    if x_end <= a:
        raise ValueError(f"x_end={x_end} must exceed a={a}")
    tw = float(taper_width)
    if tw < 0.0:
        raise ValueError("taper_width must be nonnegative")
    if tw > (x_end - a) / 4.0:
        raise PieceTooShort(
            f"taper_width {tw} exceeds a quarter of the piece length "
            f"{x_end - a}")
    C = float(target.C if C is None else C)
    data = target.data
    k = target.k
    if 2.0 * C / (a - b) > 0.5 * (2.0 * k):
        raise EnvelopeTooLarge(
            f"2C/(a-b) = {2.0 * C / (a - b):.4g} exceeds half the phase "
            f"rate 2k = {2.0 * k:.4g}; enlarge a - b")
    spec = spec or IntegratorSpec(rel_tol=1e-8, abs_tol=1e-11)
    xi0 = float(np.mod(xi0, TWO_PI))
    rate = xi_rate(data)
    b_s = side * b
    x_start, x_stop = side * a, side * x_end
    x_lo_s, x_hi_s = min(x_start, x_stop), max(x_start, x_stop)
    k2 = 2.0 * k
    const = data.is_constant

    def window(x):
        return taper_window(x, x_lo_s, x_hi_s, tw) if tw > 0.0 else 1.0

    if const:
        u0 = float(data.u_f(0.0))
        v0 = float(data.v_f(0.0))
        P0 = float(data.Psi_f(0.0))
        d0 = float(data.delta_f.deriv(0.0))

        def zeta_rhs(x, z):
            xi = z[0] + rate * x
            return [k2 + d0 - rate
                    + (2.0 * C * window(x) * np.sin(xi) / (x - b_s))
                    * (u0 - v0 - P0 * np.cos(xi))]
    else:
        def zeta_rhs(x, z):
            xi = z[0] + rate * x
            return [k2 + data.delta_f.deriv(x) - rate
                    + (2.0 * C * window(x) * np.sin(xi) / (x - b_s))
                    * (data.u_f(x) - data.v_f(x) - data.Psi_f(x) * np.cos(xi))]

    arate = max(abs(rate), 1e-2)
    max_step = min(spec.max_step, 0.5 / arate)
    sol = solve_ivp(zeta_rhs, (x_start, x_stop), [xi0 - rate * x_start],
                    method="DOP853", rtol=spec.rel_tol, atol=spec.abs_tol,
                    max_step=max_step)
    if not sol.success:
        raise StepSizeUnderflow(sol.message)
    if not np.all(np.isfinite(sol.y)):
        raise NonFiniteState("phase-lock integration produced non-finite values")
    ts, zs = sol.t, sol.y[0]
    xi_nodes = zs + rate * ts
    wv = window(ts)
    if const:
        dz = (k2 + d0 - rate
              + (2.0 * C * wv * np.sin(xi_nodes) / (ts - b_s))
              * (u0 - v0 - P0 * np.cos(xi_nodes)))
    else:
        dz = (k2 + data.delta_f.deriv(ts) - rate
              + (2.0 * C * wv * np.sin(xi_nodes) / (ts - b_s))
              * (data.u_f(ts) - data.v_f(ts) - data.Psi_f(ts) * np.cos(xi_nodes)))
    if ts[0] > ts[-1]:
        ts, zs, dz = ts[::-1], zs[::-1], dz[::-1]
    zeta = CubicHermiteSpline(ts, zs, dz)
    return XiTrajectory(side=side, a=a, b=b, x_end=x_end, xi0=xi0, C=C,
                        rate=rate, zeta=zeta, nodes_x=sol.t,
                        nodes_xi=sol.y[0] + rate * sol.t, nfev=sol.nfev,
                        taper_width=tw, spec=spec)


@dataclass
class PotentialPiece:
    """One compactly supported potential piece targeting a single energy."""

    side: int
    lam: float
    k: float
    omega: float
    C: float
    a: float
    b: float
    x_end: float
    xi0: float
    taper_width: float
    rate: float
    x_grid: np.ndarray
    xi_grid: np.ndarray
    V_grid: np.ndarray
    traj: XiTrajectory
    target: EmbeddingTarget | None = None

    @property
    def x_lo(self) -> float:
        return self.a if self.side > 0 else -self.x_end

    @property
    def x_hi(self) -> float:
        return self.x_end if self.side > 0 else -self.a

    @property
    def side_name(self) -> str:
        return "plus" if self.side > 0 else "minus"

    def V_at(self, x):
        """Exact evaluator (spline phase, analytic envelope, taper)."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        m = (x >= self.x_lo) & (x <= self.x_hi)
        if np.any(m):
            xm = x[m]
            val = -(self.omega * self.C) * np.sin(self.traj.xi_at(xm)) \
                / (xm - self.side * self.b)
            if self.taper_width > 0.0:
                val = val * taper_window(xm, self.x_lo, self.x_hi,
                                         self.taper_width)
            out[m] = val
        return float(out[0]) if scalar else out

    def V_interp(self, x):
        """Fast linear-interp evaluator on the stored sample grid."""
        return np.interp(x, self.x_grid, self.V_grid)

    def manifest_entry(self) -> dict:
        return {"side": self.side_name, "lambda": self.lam, "a": self.a,
                "b": self.b, "x_end": self.x_end, "xi0": self.xi0,
                "C": self.C, "taper_width": self.taper_width}


def _piece_grid(traj: XiTrajectory) -> np.ndarray:
    span = traj.x_hi - traj.x_lo
    h_target = 0.05 / max(abs(traj.rate), 1e-2)
    n = max(64, int(np.ceil(span / h_target)))
    return traj.x_lo + (span / n) * np.arange(n + 1)


def piece_potential(target: EmbeddingTarget, traj: XiTrajectory) -> PotentialPiece:
    """Potential piece slaved to the trajectory's (possibly windowed) phase."""
    xs = _piece_grid(traj)
    xi = traj.xi_at(xs)
    V = -(target.omega * traj.C) * np.sin(xi) / (xs - traj.side * traj.b)
    if traj.taper_width > 0.0:
        V = V * taper_window(xs, traj.x_lo, traj.x_hi, traj.taper_width)
    return PotentialPiece(side=traj.side, lam=target.lam, k=target.k,
                          omega=target.omega, C=traj.C, a=traj.a, b=traj.b,
                          x_end=traj.x_end, xi0=traj.xi0,
                          taper_width=traj.taper_width,
                          rate=traj.rate, x_grid=xs, xi_grid=xi, V_grid=V,
                          traj=traj, target=target)


def smooth_compact(piece: PotentialPiece, taper_width: float = 1.0) -> PotentialPiece:
    """Rebuild the piece with a C-infinity window inside the phase drift.

    The smoothed potential equals the raw formula times a window that is
    1 on the plateau and 0 at the edges, with the phase re-solved so the
    windowed potential stays exactly slaved to its own decaying
    solution.  Multiplying the window in after the fact would leave a
    potential whose seeded solution departs from the decaying branch:
    the phase defect picked up in the taper zone is amplified like
    ((|x|-b)/(a-b))^(C*Psi_mean) across the rest of the piece.
    """
    if taper_width <= 0.0:
        raise ValueError("taper_width must be positive")
    span = piece.x_end - piece.a
    if taper_width > span / 4.0:
        raise PieceTooShort(
            f"taper_width {taper_width} exceeds a quarter of the piece "
            f"length {span}")
    if piece.target is None:
        raise ValueError("piece carries no target reference")
    traj = solve_xi(piece.target, piece.a, piece.b, piece.xi0, piece.x_end,
                    side=piece.side, spec=piece.traj.spec, C=piece.C,
                    taper_width=float(taper_width))
    return piece_potential(piece.target, traj)


def slaved_amplitude(piece: PotentialPiece, lnR_start: float = 0.0):
    """ln R of the decaying solution carried by a piece, by quadrature.

    The piece's potential is slaved to its stored phase, so the pair
    (R, xi_grid) solves the perturbed Pruefer system exactly and ln R
    is the running integral of (V/omega)*Psi*sin(xi).  Forward ODE
    integration cannot follow this branch: contamination by the
    complementary growing solution scales like
    ((|x|-b)/(a-b))^(C*Psi_mean), beyond double precision within a few
    percent of a piece.  Returns (x ascending, ln R samples) anchored
    to lnR_start at the piece's inner edge |x| = a.
    """
    if piece.target is None:
        raise ValueError("piece carries no target reference")
    data = piece.target.data
    xs = piece.x_grid
    h = float(xs[1] - xs[0])
    integrand = (piece.V_grid / piece.omega) \
        * np.asarray(data.Psi_f(xs), dtype=float) * np.sin(piece.xi_grid)
    F = cumulative_simpson_uniform(integrand, h, f0=0.0)
    if piece.side > 0:
        return xs, lnR_start + F
    return xs, lnR_start + (F - F[-1])


@dataclass
class TrackRecord:
    """Amplitude/phase history of one target on one side of a schedule."""

    target_index: int
    side: int
    xs: np.ndarray
    ln_R: np.ndarray
    xi: np.ndarray
    own_starts: list[float]  # |x| of this target's own piece activations
    started_at: float


@dataclass
class SynthesisSchedule:
    targets: list[EmbeddingTarget]
    pieces: list[PotentialPiece]
    T: list[float]
    N: list[int]
    envelope_h: object
    mode: str
    a0: float
    x_max: float
    b: float
    C_bound: float
    K: float
    safety: float
    taper_width: float
    xi0_default: float
    ratio_policy: float | None
    spec: IntegratorSpec
    tracks: dict = field(default_factory=dict)
    activations: list = field(default_factory=list)


def probe_constants(targets, *, b: float = 0.0, xi0: float = np.pi / 2,
                    taper_width: float = 1.0,
                    spec: IntegratorSpec | None = None) -> tuple[float, float]:
    """Measure the decay prefactor C_bound and the piece-offset floor K.

    C_bound = 2 * sup R(x)*((|x|-b)/(a-b))^100 / R(a) over a probe piece,
    maximized over targets.  K doubles from the phase-rate floor 2C/k
    until every ordered bystander pair stays within factor 1.5 over a
    probe piece, then is doubled once more as safety.
    """
    from .verify import decay_check, stability_check

    spec = spec or IntegratorSpec(rel_tol=1e-8, abs_tol=1e-11)
    env_floor = max(2.0 * t.C / t.k for t in targets)
    C_bound = 0.0
    for t in targets:
        a_p = b + env_floor
        x_end = b + (a_p - b) * float(np.exp(0.25))
        traj = solve_xi(t, a_p, b, xi0, x_end, side=1, spec=spec,
                        taper_width=min(taper_width, (x_end - a_p) / 4.0))
        piece = piece_potential(t, traj)
        rep = decay_check(t, piece)
        C_bound = max(C_bound, rep.C_bound)

    ratio_max = max((2.0 ** len(targets) * C_bound) ** (1.0 / DECAY_EXPONENT),
                    1.0 + 1e-6)
    K_try = env_floor
    while True:
        ok = True
        if len(targets) > 1:
            a_s = b + K_try
            x_end = b + (a_s - b) * ratio_max
            for i, ti in enumerate(targets):
                traj = solve_xi(ti, a_s, b, xi0, x_end, side=1, spec=spec,
                                taper_width=min(taper_width,
                                                (x_end - a_s) / 4.0))
                piece = piece_potential(ti, traj)
                for j, tj in enumerate(targets):
                    if i == j:
                        continue
                    try:
                        stability_check(tj, piece, spec=spec, threshold=1.5)
                    except StabilityViolated:
                        ok = False
                        break
                if not ok:
                    break
        if ok:
            return C_bound, 2.0 * K_try
        K_try *= 2.0
        if K_try > 1e12:
            raise HorizonTooShort(
                "bystander stability does not reach factor 1.5 at any "
                "practical piece offset")


def schedule(targets, mode: str = "finite", a0: float = None,
             x_max: float = None, ratio_policy: float | None = None, *,
             b: float = 0.0, h=None, safety: float = 1.0,
             xi0: float = np.pi / 2, taper_width: float = 1.0,
             spec: IntegratorSpec | None = None,
             track_spec: IntegratorSpec | None = None,
             C_bound: float | None = None,
             K: float | None = None) -> SynthesisSchedule:
    """Round-robin piece assignment with tracked arrival phases.

    Each step builds mirrored pieces on (T_r, T_{r+1}) and (-T_{r+1},
    -T_r) for one target, seeding the phase with that target's tracked
    value so successive own pieces chain into one decaying solution;
    every active target's (ln R, xi) is then advanced across the new
    pieces.  Breakpoints satisfy C_bound * ratio^(-100) * 2^(N-1) <= 1/2
    so each full cycle at worst halves every tracked amplitude.

    In growing-N mode targets activate one per cycle once
    h(T_r) >= safety * (N+1) * max envelope of the first N+1 targets,
    and every sample must satisfy |V|*(1+|x|) <= |h|.
    """
    if not targets:
        raise ValueError("no targets")
    if mode not in ("finite", "growing"):
        raise ValueError(f"unknown mode {mode!r}")
    if mode == "growing" and h is None:
        raise ValueError("growing-N mode needs the envelope function h")
    if a0 is None or x_max is None:
        raise ValueError("a0 and x_max are required")
    if not 0.0 <= b < a0:
        raise ValueError(f"need 0 <= b < a0, got b={b}, a0={a0}")
    if x_max <= a0:
        raise ValueError("x_max must exceed a0")
    spec = spec or IntegratorSpec(rel_tol=1e-8, abs_tol=1e-11)
    track_spec = track_spec or IntegratorSpec(rel_tol=1e-6, abs_tol=1e-9)

    if C_bound is None or K is None:
        C_probe, K_probe = probe_constants(
            targets, b=b, xi0=xi0, taper_width=taper_width, spec=spec)
        C_bound = C_probe if C_bound is None else C_bound
        K = K_probe if K is None else K
    if a0 - b < K:
        raise PieceTooShort(
            f"a0 - b = {a0 - b:.6g} is below the probed offset floor "
            f"K = {K:.6g}")

    n_targets = len(targets)
    envelopes = [t.envelope for t in targets]
    if mode == "growing":
        N = 1
        if abs(h(a0)) < safety * 1.0 * envelopes[0]:
            raise EnvelopeViolation(
                f"|h(a0)| = {abs(h(a0)):.4g} cannot cover the first "
                f"target's envelope {envelopes[0]:.4g}")
    else:
        N = n_targets

    # Per-target per-side tracked state; tracking starts at first own piece.
    states = {(i, s): {"xi": None, "lnR": 0.0, "xs": [], "ln": [], "xiarr": [],
                       "own": [], "start": None}
              for i in range(n_targets) for s in (1, -1)}

    T = [float(a0)]
    Ns: list[int] = []
    pieces: list[PotentialPiece] = []
    activations: list[tuple[int, float]] = [(i, float(a0)) for i in range(N)]
    c = 0  # rotation pointer within the active prefix
    while True:
        T_r = T[-1]
        if c == 0 and mode == "growing" and N < n_targets:
            need = safety * (N + 1) * max(envelopes[:N + 1])
            if abs(h(T_r)) >= need:
                N += 1
                activations.append((N - 1, T_r))
        ratio = (2.0 ** N * C_bound) ** (1.0 / DECAY_EXPONENT)
        if ratio_policy is not None:
            ratio = max(ratio, ratio_policy)
        T_next = b + (T_r - b) * ratio
        if T_next > x_max:
            break
        i = c
        target = targets[i]
        for side in (1, -1):
            st = states[(i, side)]
            seed = st["xi"] if st["xi"] is not None else xi0
            traj = solve_xi(target, T_r, b, seed, T_next, side=side, spec=spec,
                            taper_width=min(taper_width, (T_next - T_r) / 4.0))
            piece = piece_potential(target, traj)
            if mode == "growing":
                lhs = np.abs(piece.V_grid) * (1.0 + np.abs(piece.x_grid))
                rhs = np.abs(h(piece.x_grid))
                if np.any(lhs > rhs + 1e-12):
                    worst = int(np.argmax(lhs - rhs))
                    raise EnvelopeViolation(
                        f"|V|(1+|x|) = {lhs[worst]:.4g} exceeds |h| = "
                        f"{rhs[worst]:.4g} at x = {piece.x_grid[worst]:.6g}")
            pieces.append(piece)
            # Advance every started target across the new piece; the owner
            # starts here if it has not yet.  The owner rides the piece's
            # own slaved solution (quadrature along the stored phase; the
            # decaying branch cannot be re-derived by forward integration),
            # everyone else integrates the well-conditioned bystander flow.
            for j in range(N):
                stj = states[(j, side)]
                if stj["xi"] is None:
                    if j != i:
                        continue
                    stj["xi"] = float(np.mod(seed, TWO_PI))
                    stj["lnR"] = 0.0
                    stj["start"] = side * T_r
                if j == i:
                    stj["own"].append(T_r)
                    xs_sl, ln_sl = slaved_amplitude(piece, stj["lnR"])
                    stj["xi"] = float(traj.xi_at(side * T_next))
                    stj["lnR"] = float(ln_sl[-1] if side > 0 else ln_sl[0])
                    stride = max(1, int(round(
                        (np.pi / (2.0 * max(abs(piece.rate), 1e-2)))
                        / (xs_sl[1] - xs_sl[0]))))
                    idx = np.arange(0, xs_sl.size, stride)
                    if idx[-1] != xs_sl.size - 1:
                        idx = np.append(idx, xs_sl.size - 1)
                    if side < 0:
                        idx = idx[::-1]
                    stj["xs"].append(xs_sl[idx])
                    stj["ln"].append(ln_sl[idx])
                    stj["xiarr"].append(piece.xi_grid[idx])
                else:
                    run = integrate_R_xi(
                        targets[j].data, piece.V_interp,
                        side * T_r, side * T_next, stj["xi"],
                        spec=track_spec, lnR0=stj["lnR"])
                    stj["xi"] = float(run.xi[-1])
                    stj["lnR"] = float(run.ln_R_end)
                    stj["xs"].append(run.xs)
                    stj["ln"].append(run.ln_R)
                    stj["xiarr"].append(run.xi)
        T.append(T_next)
        Ns.append(N)
        c = (c + 1) % N

    unpieced = [i for i in range(n_targets) if not states[(i, 1)]["own"]]
    if unpieced:
        raise HorizonTooShort(
            f"x_max = {x_max:.6g} reached before targets {unpieced} "
            "received a piece; extend the horizon")

    tracks = {}
    for (i, s), st in states.items():
        if st["start"] is None:
            continue
        tracks[(i, s)] = TrackRecord(
            target_index=i, side=s,
            xs=np.concatenate(st["xs"]), ln_R=np.concatenate(st["ln"]),
            xi=np.concatenate(st["xiarr"]), own_starts=list(st["own"]),
            started_at=st["start"])

    return SynthesisSchedule(
        targets=list(targets), pieces=pieces, T=T, N=Ns, envelope_h=h,
        mode=mode, a0=float(a0), x_max=float(x_max), b=float(b),
        C_bound=float(C_bound), K=float(K), safety=float(safety),
        taper_width=float(taper_width), xi0_default=float(xi0),
        ratio_policy=ratio_policy, spec=spec, tracks=tracks,
        activations=activations)


@dataclass
class SynthesizedPotential:
    """Assembled even-sided potential: zero outside its pieces."""

    pieces: list[PotentialPiece]
    b: float
    a0: float
    x_grid: np.ndarray
    V_grid: np.ndarray
    metadata: dict

    def V(self, x):
        """Exact evaluator; 0 on (-a0, a0) and between pieces."""
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.zeros_like(x)
        for pc in self.pieces:
            m = (x >= pc.x_lo) & (x <= pc.x_hi)
            if np.any(m):
                out[m] += pc.V_at(x[m])
        return float(out[0]) if scalar else out

    def V_interp(self, x):
        return np.interp(x, self.x_grid, self.V_grid)

    @property
    def envelope_peak(self) -> float:
        """Largest |omega|*C over the pieces."""
        return max(abs(pc.omega) * pc.C for pc in self.pieces)


def _assemble_pieces(pieces: list[PotentialPiece], b: float, a0: float,
                     metadata: dict) -> SynthesizedPotential:
    order = sorted(range(len(pieces)), key=lambda i: pieces[i].x_lo)
    pieces = [pieces[i] for i in order]
    for left, right in zip(pieces, pieces[1:]):
        tol = 1e-9 * max(1.0, abs(left.x_hi))
        if right.x_lo < left.x_hi - tol:
            raise OverlapDetected(
                f"pieces overlap: [{left.x_lo:.6g}, {left.x_hi:.6g}] vs "
                f"[{right.x_lo:.6g}, {right.x_hi:.6g}]")
    x_grid = np.concatenate([pc.x_grid for pc in pieces])
    V_grid = np.concatenate([pc.V_grid for pc in pieces])
    return SynthesizedPotential(pieces=pieces, b=b, a0=a0,
                                x_grid=x_grid, V_grid=V_grid,
                                metadata=metadata)


def assemble(sched: SynthesisSchedule) -> SynthesizedPotential:
    """Fold a schedule's pieces into one evaluator with metadata."""
    metadata = {
        "mode": sched.mode,
        "a0": sched.a0,
        "x_max": sched.x_max,
        "b": sched.b,
        "C_bound": sched.C_bound,
        "K": sched.K,
        "safety": sched.safety,
        "taper_width": sched.taper_width,
        "xi0_default": sched.xi0_default,
        "T": [float(t) for t in sched.T],
        "N": [int(n) for n in sched.N],
        "targets": [{"lambda": t.lam, "k": t.k, "omega": t.omega, "C": t.C}
                    for t in sched.targets],
    }
    return _assemble_pieces(sched.pieces, sched.b, sched.a0, metadata)


def write_manifest(pot: SynthesizedPotential, path: str,
                   p: PeriodicCoefficient, q: PeriodicCoefficient,
                   spec: IntegratorSpec) -> None:
    """JSON manifest sufficient to rebuild the potential bit-identically."""
    doc = dict(pot.metadata)
    doc["coefficients"] = {"p": p.to_dict(), "q": q.to_dict()}
    doc["integrator"] = {"rel_tol": spec.rel_tol, "abs_tol": spec.abs_tol}
    fl = {(pc.target.floquet.spec.rel_tol, pc.target.floquet.spec.abs_tol,
           pc.target.floquet.grid.size - 1)
          for pc in pot.pieces if pc.target is not None}
    if len(fl) > 1:
        raise ValueError("pieces built from mixed Floquet integrator specs")
    if fl:
        rel, ab, n_grid = next(iter(fl))
        doc["floquet_integrator"] = {"rel_tol": rel, "abs_tol": ab,
                                     "n_grid": n_grid}
    doc["pieces"] = [pc.manifest_entry() for pc in pot.pieces]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def rebuild_potential(manifest) -> SynthesizedPotential:
    """Re-synthesize a potential from its manifest (path or dict)."""
    if isinstance(manifest, (str, os.PathLike)):
        with open(manifest, "r", encoding="utf-8") as fh:
            manifest = json.load(fh)
    p = PeriodicCoefficient.from_dict(manifest["coefficients"]["p"])
    q = PeriodicCoefficient.from_dict(manifest["coefficients"]["q"])
    spec = IntegratorSpec(rel_tol=manifest["integrator"]["rel_tol"],
                          abs_tol=manifest["integrator"]["abs_tol"])
    fl = manifest.get("floquet_integrator", manifest["integrator"])
    fl_spec = IntegratorSpec(rel_tol=fl["rel_tol"], abs_tol=fl["abs_tol"])
    n_grid = int(fl.get("n_grid", 4096))
    frames: dict[float, EmbeddingTarget] = {}
    for entry in manifest["targets"]:
        lam = float(entry["lambda"])
        sol = floquet_solution(p, q, lam, spec=fl_spec, n_grid=n_grid)
        data = derived_data(sol)
        frames[lam] = EmbeddingTarget(lam=lam, k=sol.k, floquet=sol,
                                      data=data, C=float(entry["C"]),
                                      omega=sol.omega)
    pieces = []
    for entry in manifest["pieces"]:
        target = frames[float(entry["lambda"])]
        side = 1 if entry["side"] == "plus" else -1
        traj = solve_xi(target, float(entry["a"]), float(entry["b"]),
                        float(entry["xi0"]), float(entry["x_end"]),
                        side=side, spec=spec, C=float(entry["C"]),
                        taper_width=float(entry["taper_width"]))
        pieces.append(piece_potential(target, traj))
    meta = {key: manifest[key] for key in
            ("mode", "a0", "x_max", "b", "C_bound", "K", "safety",
             "taper_width", "xi0_default", "T", "N", "targets")
            if key in manifest}
    return _assemble_pieces(pieces, float(manifest["b"]),
                            float(manifest["a0"]), meta)


def write_potential_csv(pot: SynthesizedPotential, path: str,
                        max_rows_per_piece: int = 2000) -> None:
    """Decimated x,V samples, per piece, in ascending x."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("x,V\n")
        for pc in pot.pieces:
            n = pc.x_grid.size
            stride = max(1, int(np.ceil(n / max_rows_per_piece)))
            idx = np.arange(0, n, stride)
            if idx[-1] != n - 1:
                idx = np.append(idx, n - 1)
            for xv, vv in zip(pc.x_grid[idx], pc.V_grid[idx]):
                fh.write(f"{xv:.17g},{vv:.17g}\n")
