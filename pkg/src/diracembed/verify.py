"""Numerical certification of the decay, stability, and oscillation bounds.

Every check integrates the claimed inequality directly and reports the
measured margin; nothing is assumed from the construction.  Oscillatory
sup-scans share one cumulative quadrature pass over [min x0, x_max] with
suffix maxima, so the cost is one dense sweep regardless of how many
checkpoints are requested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from ._util import cumulative_simpson_uniform, fit_line, frac
from .errors import (
    BoundViolated,
    DecayTooSlow,
    HypothesisViolated,
    InconclusiveTail,
    ResonantFrequency,
    StabilityViolated,
)
from .periodic_core import IntegratorSpec
from .pruefer import integrate_R_xi
from .synth import (
    EmbeddingTarget,
    PotentialPiece,
    SynthesizedPotential,
    TrackRecord,
    piece_potential,
    slaved_amplitude,
    solve_xi,
)

__all__ = [
    "OscCheck",
    "oscillatory_check_41",
    "oscillatory_check_42",
    "DecayReport",
    "decay_check",
    "StabilityReport",
    "stability_check",
    "NonembeddingReport",
    "nonembedding_check",
    "adversarial_potential",
    "TailReport",
    "l2_tail_estimate",
    "track_targets",
    "write_reports_json",
    "write_summary_csv",
]

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# oscillatory sup-scans


@dataclass
class OscCheck:
    """Sup of |int_{x0}^x integrand| for each checkpoint, with products."""

    description: str
    a: float
    beta: float
    x0_list: list[float]
    sup_integral: list[float]
    products: list[float]  # sup * x0^beta

    @property
    def max_product_ratio(self) -> float:
        lo = min(self.products)
        return float(max(self.products) / lo) if lo > 0 else np.inf

    def to_dict(self) -> dict:
        return {"name": self.description, "a": self.a, "beta": self.beta,
                "x0": list(self.x0_list),
                "sup_integral": list(self.sup_integral),
                "products": list(self.products)}


def _sup_scan(make_integrand, x_lo: float, x_max: float, h: float,
              x0_list, chunk: int = 4_000_000):
    """sup_{x >= x0} |F(x) - F(x0)| for each x0, F the running integral.

    make_integrand(xs) -> samples.  One forward pass; each chunk keeps its
    max/min and the partial suffix extrema for checkpoints inside it.
    """
    x0s = sorted(float(v) for v in x0_list)
    span = x_max - x_lo
    n_total = max(2, int(np.ceil(span / h)))
    h = span / n_total
    # Snap checkpoints onto the grid.
    idx0 = [int(round((v - x_lo) / h)) for v in x0s]
    chunk_max: list[float] = []
    chunk_min: list[float] = []
    F0: dict[int, float] = {}
    part_max: dict[int, float] = {}
    part_min: dict[int, float] = {}
    in_chunk: dict[int, int] = {}
    carry = 0.0
    start = 0
    ci = 0
    while start < n_total:
        stop = min(start + chunk, n_total)
        i = np.arange(start, stop + 1)
        xs = x_lo + i * h
        F = cumulative_simpson_uniform(make_integrand(xs), h, f0=carry)
        chunk_max.append(float(F.max()))
        chunk_min.append(float(F.min()))
        for j, i0 in enumerate(idx0):
            if start <= i0 <= stop:
                loc = i0 - start
                F0[j] = float(F[loc])
                part_max[j] = float(F[loc:].max())
                part_min[j] = float(F[loc:].min())
                in_chunk[j] = ci
        carry = float(F[-1])
        start = stop
        ci += 1
    # Suffix extrema over whole chunks.
    suf_max = np.full(ci + 1, -np.inf)
    suf_min = np.full(ci + 1, np.inf)
    for c in range(ci - 1, -1, -1):
        suf_max[c] = max(chunk_max[c], suf_max[c + 1])
        suf_min[c] = min(chunk_min[c], suf_min[c + 1])
    sups = []
    for j in range(len(x0s)):
        hi = max(part_max[j], suf_max[in_chunk[j] + 1])
        lo = min(part_min[j], suf_min[in_chunk[j] + 1])
        sups.append(max(hi - F0[j], F0[j] - lo))
    return x0s, sups


def oscillatory_check_41(a: float, beta1: float, beta2: float, x0_list,
                         x_max: float, c: float = 1.0, use_cos: bool = False,
                         quad_step: float | None = None) -> OscCheck:
    """Sup of |int sin(theta)/t^beta2| with theta' = a + c/(1+t^beta1).

    Reports sup * x0^beta, beta = min(beta2, beta1+beta2-1, 2*beta2-1);
    boundedness of the products across a decade of x0 is the claim.
    """
    if a == 0.0:
        raise HypothesisViolated("drift frequency a must be nonzero")
    if beta1 <= 0.0 or beta2 <= 0.0:
        raise HypothesisViolated("beta exponents must be positive")
    if beta1 + beta2 <= 1.0:
        raise HypothesisViolated("need beta1 + beta2 > 1")
    if beta2 <= 0.5:
        raise HypothesisViolated("need beta2 > 1/2")
    beta = min(beta2, beta1 + beta2 - 1.0, 2.0 * beta2 - 1.0)
    x_lo = min(float(v) for v in x0_list)
    if x_lo <= 0.0 or x_max <= x_lo:
        raise ValueError("need 0 < min(x0) < x_max")
    rate = abs(a) + abs(c)
    h = quad_step if quad_step is not None else 0.04 / max(rate, 0.5)
    osc = np.cos if use_cos else np.sin

    if beta1 == 1.0:
        def theta(xs):
            return a * xs + c * np.log1p(xs)
    else:
        # theta(x) = a*x + c * int_0^x dt/(1+t^beta1), tabulated once.
        grid = np.linspace(0.0, x_max, 400_001)
        prim = cumulative_simpson_uniform(1.0 / (1.0 + grid ** beta1),
                                          grid[1] - grid[0])

        def theta(xs):
            return a * xs + c * np.interp(xs, grid, prim)

    def integrand(xs):
        return osc(theta(xs)) / xs ** beta2

    x0s, sups = _sup_scan(integrand, x_lo, float(x_max), h, x0_list)
    prods = [s * v ** beta for s, v in zip(sups, x0s)]
    kind = "cos" if use_cos else "sin"
    return OscCheck(
        description=f"osc-powerlaw[{kind}] a={a} beta1={beta1} beta2={beta2}",
        a=float(a), beta=float(beta), x0_list=x0s, sup_integral=sups,
        products=prods)


def oscillatory_check_42(target: EmbeddingTarget, Gamma, a: float, x0_list,
                         x_max: float, enforce_nonresonance: bool = True,
                         quad_step: float | None = None) -> OscCheck:
    """Sup of |int Gamma(t) sin(theta)/t| with theta = a*t + gamma(t) + ln t.

    gamma is the periodic part of the target's first phase function.
    Products sup * x0 should stay bounded across a decade of x0 when a
    stays away from 2*pi*Z; passing a resonant a requires explicitly
    waiving the guard (the divergent control case).
    """
    dist = abs(a - TWO_PI * np.round(a / TWO_PI))
    if enforce_nonresonance and dist < 1e-3:
        raise ResonantFrequency(
            f"a = {a} is within {dist:.2e} of 2*pi*Z; the bound fails there")
    data = target.data
    g1f = data.gamma1_f

    def gamma_per(xs):
        t = frac(xs)
        return g1f(t) - g1f.slope * t

    x_lo = min(float(v) for v in x0_list)
    if x_lo <= 0.0 or x_max <= x_lo:
        raise ValueError("need 0 < min(x0) < x_max")
    slope_per = np.max(np.abs(np.diff(data.gamma1))) * data.x.size / TWO_PI
    rate = abs(a) + abs(g1f.slope) + float(slope_per) + 1.0 / x_lo
    h = quad_step if quad_step is not None else 0.04 / max(rate, 0.5)

    def integrand(xs):
        theta = a * xs + gamma_per(xs) + np.log(xs)
        return np.asarray(Gamma(xs), dtype=float) * np.sin(theta) / xs

    x0s, sups = _sup_scan(integrand, x_lo, float(x_max), h, x0_list)
    prods = [s * v for s, v in zip(sups, x0s)]
    return OscCheck(
        description=f"osc-periodic a={a} lam={target.lam}",
        a=float(a), beta=1.0, x0_list=x0s, sup_integral=sups, products=prods)


# ---------------------------------------------------------------------------
# decay / stability on pieces


@dataclass
class DecayReport:
    """Fitted power-law decay of one tracked amplitude across a piece."""

    lam: float
    side: int
    a: float
    b: float
    x_end: float
    xs: np.ndarray
    ln_R: np.ndarray
    slope: float
    intercept: float
    C_add: float
    C_bound: float
    max_rise: float
    n_samples: int

    def to_dict(self) -> dict:
        return {"name": "decay", "lambda": self.lam, "side": self.side,
                "a": self.a, "b": self.b, "x_end": self.x_end,
                "slope": self.slope, "intercept": self.intercept,
                "C_add": self.C_add, "C_bound": self.C_bound,
                "max_rise": self.max_rise, "n_samples": self.n_samples}


def decay_check(target: EmbeddingTarget, piece: PotentialPiece,
                slope_threshold: float = -95.0) -> DecayReport:
    """Fit the decay of the piece's slaved amplitude across the piece.

    ln R is obtained by quadrature along the piece's stored phase — the
    pair is an exact solution of the perturbed Pruefer system because
    the potential is slaved to that phase.  Forward re-integration
    cannot certify this branch: contamination by the complementary
    growing solution scales like ((|x|-b)/(a-b))^(C*Psi_mean), which
    exceeds 1/eps_machine within a few percent of a piece.  Asserts the
    fitted slope of ln R against ln((|x|-b)/(a-b)) is at most
    slope_threshold and that ln R never exceeds its start value by more
    than the additive constant; also measures the scheduling prefactor
    C_bound = 2 * sup R * ((|x|-b)/(a-b))^100.
    """
    xs, ln_R = slaved_amplitude(piece, 0.0)
    if piece.side < 0:
        xs, ln_R = xs[::-1], ln_R[::-1]  # integration order, start first
    lnratio = np.log((np.abs(xs) - piece.b) / (piece.a - piece.b))
    slope, intercept = fit_line(lnratio, ln_R)
    rise = ln_R - ln_R[0]
    C_add = float(np.max(rise + 100.0 * lnratio))
    max_rise = float(np.max(rise))
    if slope > slope_threshold:
        raise DecayTooSlow(slope, slope_threshold)
    if max_rise > max(C_add, 0.0) + 1e-9:
        raise BoundViolated(
            f"ln R rises {max_rise:.3g} above its start, beyond the "
            f"additive constant {C_add:.3g}")
    stride = max(1, int(np.ceil(xs.size / 4096)))
    idx = np.arange(0, xs.size, stride)
    if idx[-1] != xs.size - 1:
        idx = np.append(idx, xs.size - 1)
    return DecayReport(lam=target.lam, side=piece.side, a=piece.a, b=piece.b,
                       x_end=piece.x_end, xs=xs[idx], ln_R=ln_R[idx],
                       slope=float(slope), intercept=float(intercept),
                       C_add=C_add, C_bound=float(2.0 * np.exp(C_add)),
                       max_rise=max_rise, n_samples=int(xs.size))


@dataclass
class StabilityReport:
    """Worst bystander amplification over a phase grid, for one piece."""

    lam_piece: float
    lam_bystander: float
    side: int
    threshold: float
    max_ratio: float
    worst_phase: float
    worst_x: float
    ratios: list[float]

    def to_dict(self) -> dict:
        return {"name": "stability", "lambda_piece": self.lam_piece,
                "lambda_bystander": self.lam_bystander, "side": self.side,
                "threshold": self.threshold, "max_ratio": self.max_ratio,
                "worst_phase": self.worst_phase, "worst_x": self.worst_x,
                "ratios": self.ratios}


def stability_check(bystander: EmbeddingTarget, piece: PotentialPiece,
                    spec: IntegratorSpec | None = None,
                    threshold: float = 2.0,
                    n_phases: int = 8) -> StabilityReport:
    """Max growth of a non-resonant amplitude across someone else's piece.

    Sweeps n_phases initial Pruefer phases eta0 and integrates R across
    the piece from R = 1; raises StabilityViolated if any sampled R
    exceeds the threshold.
    """
    spec = spec or IntegratorSpec(rel_tol=1e-6, abs_tol=1e-9)
    start = piece.x_lo if piece.side > 0 else piece.x_hi
    stop = piece.x_hi if piece.side > 0 else piece.x_lo
    data = bystander.data
    g1s = float(data.gamma1_f(start))
    G2s = float(data.Gamma2_f(start))
    ratios = []
    worst = (1.0, 0.0, start)
    for eta0 in TWO_PI * np.arange(n_phases) / n_phases:
        xi0 = 2.0 * (eta0 + g1s) + G2s
        run = integrate_R_xi(data, piece.V_interp, start, stop, xi0,
                             spec=spec, lnR0=0.0)
        imax = int(np.argmax(run.ln_R))
        ratio = float(np.exp(run.ln_R[imax]))
        ratios.append(ratio)
        if ratio > worst[0]:
            worst = (ratio, float(eta0), float(run.xs[imax]))
    report = StabilityReport(lam_piece=piece.lam, lam_bystander=bystander.lam,
                             side=piece.side, threshold=threshold,
                             max_ratio=worst[0], worst_phase=worst[1],
                             worst_x=worst[2], ratios=ratios)
    if worst[0] > threshold:
        raise StabilityViolated(
            f"bystander lam={bystander.lam} grows by {worst[0]:.4g} "
            f"(> {threshold}) at x={worst[2]:.6g}, phase {worst[1]:.3f}")
    return report


# ---------------------------------------------------------------------------
# non-embedding lower bound


@dataclass
class NonembeddingReport:
    """Lower-bound certificate: amplitude cannot decay into L^2."""

    lam: float
    eps: float
    C_omega: float
    C_eps: float
    x0: float
    x_max: float
    xs: np.ndarray
    ln_R: np.ndarray
    min_margin: float
    tol: float
    l2_measured: float
    l2_lower_bound: float
    square_summable: bool

    def to_dict(self) -> dict:
        return {"name": "nonembedding", "lambda": self.lam, "eps": self.eps,
                "C_omega": self.C_omega, "C_eps": self.C_eps, "x0": self.x0,
                "x_max": self.x_max, "min_margin": self.min_margin,
                "tol": self.tol, "l2_measured": self.l2_measured,
                "l2_lower_bound": self.l2_lower_bound,
                "square_summable": self.square_summable}


def adversarial_potential(target: EmbeddingTarget, x0: float, x_max: float,
                          eps: float, xi0: float = np.pi / 2,
                          spec: IntegratorSpec | None = None) -> PotentialPiece:
    """Phase-locked potential with envelope eps/x — the worst decay driver."""
    C_eff = eps / abs(target.omega)
    traj = solve_xi(target, x0, 0.0, xi0, x_max, side=1, spec=spec, C=C_eff)
    return piece_potential(target, traj)


def nonembedding_check(target: EmbeddingTarget, V, x0: float, x_max: float,
                       eps: float | None = None,
                       xi0: float = np.pi / 2,
                       spec: IntegratorSpec | None = None,
                       tol: float = 1e-3) -> NonembeddingReport:
    """Certify R(x) >= R(x0) * (x/x0)^(-C_eps) * (1 - tol) on [x0, x_max].

    C_eps = eps * sup(|g1|^2+|g2|^2)/|omega|; the hypothesis C_eps < 1/2
    is enforced, and the measured integral of R^2 is compared against the
    divergent power-law lower bound.
    """
    spec = spec or IntegratorSpec(rel_tol=1e-7, abs_tol=1e-10)
    if hasattr(V, "V_interp"):  # potential piece: sampled grid is cheapest
        V = V.V_interp
    data = target.data
    C_omega = float(np.max(data.u + data.v) / abs(data.omega))
    if eps is None:
        probe = np.geomspace(x0, x_max, 4096)
        eps = float(np.max(np.abs(np.asarray(V(probe))) * probe))
    C_eps = C_omega * eps
    if C_eps >= 0.5:
        raise HypothesisViolated(
            f"C_eps = {C_eps:.4g} >= 1/2; the lower bound needs a smaller "
            "envelope")
    run = integrate_R_xi(data, V, x0, x_max, xi0, spec=spec, lnR0=0.0)
    margin = run.ln_R + C_eps * np.log(run.xs / x0)
    min_margin = float(np.min(margin))
    if min_margin < np.log1p(-tol):
        worst = int(np.argmin(margin))
        raise BoundViolated(
            f"R(x)*(x/x0)^{C_eps:.3g} dips to {np.exp(min_margin):.6f} "
            f"of R(x0) at x={run.xs[worst]:.6g} (tolerance {tol})")
    l2 = float(np.trapezoid(np.exp(2.0 * run.ln_R), run.xs))
    expo = 1.0 - 2.0 * C_eps
    bound = float(x0 * ((x_max / x0) ** expo - 1.0) / expo) * (1.0 - tol) ** 2
    return NonembeddingReport(lam=target.lam, eps=float(eps),
                              C_omega=C_omega, C_eps=C_eps, x0=float(x0),
                              x_max=float(x_max), xs=run.xs, ln_R=run.ln_R,
                              min_margin=min_margin, tol=tol, l2_measured=l2,
                              l2_lower_bound=bound,
                              square_summable=l2 < bound)


# ---------------------------------------------------------------------------
# L^2 tails of scheduled runs


@dataclass
class TailReport:
    """Per-cycle energy of one tracked amplitude and its geometric decay."""

    target_index: int
    side: int
    cycle_bounds: list[float]
    cycle_sums: list[float]
    ratios: list[float]
    verdict: bool

    def to_dict(self) -> dict:
        return {"name": "l2-tail", "target": self.target_index,
                "side": self.side, "cycle_bounds": self.cycle_bounds,
                "cycle_sums": self.cycle_sums, "ratios": self.ratios,
                "verdict": self.verdict}


def l2_tail_estimate(track: TrackRecord, max_ratio: float = 0.5) -> TailReport:
    """Cycle-over-cycle integral of R^2 along one tracked amplitude.

    A cycle runs between consecutive activations of the target's own
    pieces; the verdict is positive when every complete cycle carries at
    most max_ratio of the previous one's energy.
    """
    bounds = sorted(track.own_starts)
    if len(bounds) < 4:
        raise InconclusiveTail(
            f"only {max(len(bounds) - 1, 0)} complete cycles; need >= 3")
    ax = np.abs(track.xs)
    order = np.argsort(ax, kind="stable")
    ax = ax[order]
    R2 = np.exp(2.0 * track.ln_R[order])
    sums = []
    for lo, hi in zip(bounds, bounds[1:]):
        m = (ax >= lo) & (ax < hi)
        if np.count_nonzero(m) < 2:
            raise InconclusiveTail(
                f"cycle [{lo:.6g}, {hi:.6g}) has too few samples")
        sums.append(float(np.trapezoid(R2[m], ax[m])))
    ratios = [b / a for a, b in zip(sums, sums[1:])]
    return TailReport(target_index=track.target_index, side=track.side,
                      cycle_bounds=[float(v) for v in bounds],
                      cycle_sums=sums, ratios=ratios,
                      verdict=all(r <= max_ratio for r in ratios))


def track_targets(pot: SynthesizedPotential, targets=None,
                  spec: IntegratorSpec | None = None) -> dict:
    """Advance each target's (ln R, xi) across an assembled potential.

    Tracking starts at the target's first own piece with that piece's
    stored phase and walks outward piece by piece: across its own pieces
    the target rides the slaved solution (quadrature along the stored
    phase — the decaying branch cannot be re-derived by forward
    integration), across other targets' pieces it integrates the
    well-conditioned bystander flow.  Records the activation radii, so
    each record feeds l2_tail_estimate directly.  Keys are
    (target_index, side).  When targets is None they are taken from the
    pieces in first-appearance order.
    """
    spec = spec or IntegratorSpec(rel_tol=1e-6, abs_tol=1e-9)
    if targets is None:
        targets, seen = [], set()
        for pc in pot.pieces:
            if pc.lam not in seen:
                seen.add(pc.lam)
                targets.append(pc.target)
    tracks = {}
    for i, target in enumerate(targets):
        for side in (1, -1):
            side_pieces = sorted((pc for pc in pot.pieces if pc.side == side),
                                 key=lambda pc: pc.a)
            own_starts = [pc.a for pc in side_pieces
                          if pc.lam == target.lam]
            if not own_starts:
                continue
            a_first = own_starts[0]
            xi_cur = None
            lnR_cur = 0.0
            xs_all, ln_all, xi_all = [], [], []
            for pc in side_pieces:
                if pc.a < a_first:
                    continue
                inner, outer = side * pc.a, side * pc.x_end
                if pc.lam == target.lam:
                    if xi_cur is None:
                        xi_cur = pc.xi0
                    xs_sl, ln_sl = slaved_amplitude(pc, lnR_cur)
                    lnR_cur = float(ln_sl[-1] if side > 0 else ln_sl[0])
                    xi_cur = float(pc.traj.xi_at(outer))
                    stride = max(1, int(round(
                        (np.pi / (2.0 * max(abs(pc.rate), 1e-2)))
                        / (xs_sl[1] - xs_sl[0]))))
                    idx = np.arange(0, xs_sl.size, stride)
                    if idx[-1] != xs_sl.size - 1:
                        idx = np.append(idx, xs_sl.size - 1)
                    if side < 0:
                        idx = idx[::-1]
                    xs_all.append(xs_sl[idx])
                    ln_all.append(ln_sl[idx])
                    xi_all.append(pc.xi_grid[idx])
                else:
                    run = integrate_R_xi(target.data, pc.V_interp,
                                         inner, outer, xi_cur,
                                         spec=spec, lnR0=lnR_cur)
                    xi_cur = float(run.xi[-1])
                    lnR_cur = float(run.ln_R_end)
                    xs_all.append(run.xs)
                    ln_all.append(run.ln_R)
                    xi_all.append(run.xi)
            tracks[(i, side)] = TrackRecord(
                target_index=i, side=side,
                xs=np.concatenate(xs_all), ln_R=np.concatenate(ln_all),
                xi=np.concatenate(xi_all), own_starts=own_starts,
                started_at=side * a_first)
    return tracks


# ---------------------------------------------------------------------------
# report output


def write_reports_json(reports, path: str) -> None:
    """All reports as one JSON array (to_dict of each report object)."""
    docs = [r.to_dict() if hasattr(r, "to_dict") else dict(r) for r in reports]
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(docs, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_summary_csv(reports, path: str) -> None:
    """One line per report: name, subject, headline number, verdict."""

    def headline(d):
        for key in ("slope", "max_ratio", "min_margin", "verdict",
                    "products"):
            if key in d:
                val = d[key]
                if isinstance(val, list):
                    val = max(val)
                return key, val
        return "", ""

    with open(path, "w", encoding="utf-8") as fh:
        fh.write("name,subject,metric,value\n")
        for r in reports:
            d = r.to_dict() if hasattr(r, "to_dict") else dict(r)
            subject = d.get("lambda", d.get("target", d.get("a", "")))
            key, val = headline(d)
            fh.write(f"{d.get('name', '?')},{subject},{key},{val}\n")
