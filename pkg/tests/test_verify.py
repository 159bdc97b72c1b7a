"""Quantitative certification checks: decay, stability, bounds, tails."""

import json
from types import SimpleNamespace

import numpy as np
import pytest

from diracembed import (
    BoundViolated,
    DecayTooSlow,
    HypothesisViolated,
    InconclusiveTail,
    IntegratorSpec,
    ResonantFrequency,
    StabilityViolated,
    TrackRecord,
    adversarial_potential,
    decay_check,
    l2_tail_estimate,
    nonembedding_check,
    oscillatory_check_41,
    oscillatory_check_42,
    piece_potential,
    solve_xi,
    stability_check,
    track_targets,
    write_reports_json,
    write_summary_csv,
)


@pytest.fixture(scope="module")
def long_piece(free_target_07):
    # one full e-fold of ln((x-b)/(a-b)) so the slope fit is sharp
    t = free_target_07
    a = 650.0
    traj = solve_xi(t, a, 0.0, np.pi / 2, float(a * np.e), taper_width=1.0)
    return piece_potential(t, traj)


# ---------------------------------------------------------------------------
# decay


def test_decay_slope_matches_design_exponent(free_target_07, long_piece):
    rep = decay_check(free_target_07, long_piece)
    # envelope constant C = 2*(100 + 5)/Psi_mean forces slope ~ -105
    assert -115.0 < rep.slope < -95.0
    assert rep.max_rise <= max(rep.C_add, 0.0) + 1e-9
    assert rep.C_bound >= 2.0
    assert rep.ln_R[0] == 0.0
    assert rep.ln_R[-1] < -95.0
    d = rep.to_dict()
    assert d["name"] == "decay" and d["slope"] == rep.slope


def test_decay_threshold_is_enforced(free_target_07, long_piece):
    with pytest.raises(DecayTooSlow):
        decay_check(free_target_07, long_piece, slope_threshold=-200.0)


def test_decay_constant_stable_under_solver_tolerances(free_target_07):
    # The scheduling prefactor must not be a solver artifact: rebuilding
    # the piece with hundred-fold tighter phase tolerances moves C_bound
    # by well under a percent.
    t = free_target_07
    a, x_end = 650.0, float(650.0 * np.e ** 0.5)
    reps = []
    for spec in (IntegratorSpec(rel_tol=1e-8, abs_tol=1e-11),
                 IntegratorSpec(rel_tol=1e-10, abs_tol=1e-13)):
        traj = solve_xi(t, a, 0.0, np.pi / 2, x_end, taper_width=1.0,
                        spec=spec)
        reps.append(decay_check(t, piece_potential(t, traj)))
    c0, c1 = reps[0].C_bound, reps[1].C_bound
    assert abs(c1 - c0) / c0 < 0.01
    assert abs(reps[1].slope - reps[0].slope) < 0.5


# ---------------------------------------------------------------------------
# stability


def _first_piece(pot, lam, side=1):
    return min((pc for pc in pot.pieces if pc.side == side
                and pc.lam == lam), key=lambda pc: pc.a)


def test_stability_of_bystander_across_foreign_piece(small_pot,
                                                     free_target_13):
    piece = _first_piece(small_pot, 0.7)
    rep = stability_check(free_target_13, piece)
    assert len(rep.ratios) == 8
    assert 1.0 <= rep.max_ratio <= 2.0
    assert rep.lam_piece == 0.7 and rep.lam_bystander == 1.3


def test_stability_phase_grid_is_converged(small_pot, free_target_13):
    # Doubling the phase grid moves the reported worst ratio < 10%.
    piece = _first_piece(small_pot, 0.7)
    r8 = stability_check(free_target_13, piece, n_phases=8)
    r16 = stability_check(free_target_13, piece, n_phases=16)
    assert abs(r16.max_ratio - r8.max_ratio) / r8.max_ratio < 0.10


def test_stability_is_exactly_one_for_zero_potential(free_target_13):
    ghost = SimpleNamespace(x_lo=100.0, x_hi=150.0, side=1, lam=0.7,
                            V_interp=lambda xs: np.zeros_like(xs))
    rep = stability_check(free_target_13, ghost, n_phases=4)
    assert rep.max_ratio == 1.0
    assert rep.ratios == [1.0, 1.0, 1.0, 1.0]


def test_stability_violation_raises(small_pot, free_target_13):
    piece = _first_piece(small_pot, 0.7)
    with pytest.raises(StabilityViolated):
        stability_check(free_target_13, piece, threshold=0.99)


# ---------------------------------------------------------------------------
# oscillatory-integral bounds


def test_oscillatory_powerlaw_products_bounded():
    rep = oscillatory_check_41(a=1.0, beta1=1.0, beta2=1.0,
                               x0_list=[10.0, 100.0], x_max=1e4)
    assert rep.beta == 1.0
    assert all(s > 0 for s in rep.sup_integral)
    assert rep.max_product_ratio < 4.0


def test_oscillatory_powerlaw_beta_rule():
    rep = oscillatory_check_41(a=2.0, beta1=0.4, beta2=0.8,
                               x0_list=[10.0, 100.0], x_max=1e4)
    assert rep.beta == pytest.approx(min(0.8, 0.4 + 0.8 - 1.0, 0.6))
    assert rep.max_product_ratio < 4.0


def test_oscillatory_powerlaw_hypotheses():
    with pytest.raises(HypothesisViolated):
        oscillatory_check_41(a=0.0, beta1=1.0, beta2=1.0,
                             x0_list=[10.0], x_max=1e3)
    with pytest.raises(HypothesisViolated):
        oscillatory_check_41(a=1.0, beta1=0.1, beta2=0.8,
                             x0_list=[10.0], x_max=1e3)
    with pytest.raises(HypothesisViolated):
        oscillatory_check_41(a=1.0, beta1=2.0, beta2=0.4,
                             x0_list=[10.0], x_max=1e3)


def test_oscillatory_periodic_products_bounded(free_target_07):
    rep = oscillatory_check_42(free_target_07, lambda xs: np.ones_like(xs),
                               a=1.0, x0_list=[10.0, 100.0], x_max=1e4)
    assert rep.max_product_ratio < 4.0


def test_oscillatory_periodic_guards_resonance(free_target_07):
    with pytest.raises(ResonantFrequency):
        oscillatory_check_42(free_target_07, lambda xs: np.ones_like(xs),
                             a=6 * np.pi, x0_list=[10.0], x_max=1e3)


def test_oscillatory_resonant_control_diverges(free_target_07):
    # a in 2*pi*Z defeats the bound: integrand ~ sin(ln x)/x, whose
    # running integral has O(1) sup from every x0, so sup * x0 grows
    # linearly in x0 instead of staying bounded.
    rep = oscillatory_check_42(free_target_07, lambda xs: np.ones_like(xs),
                               a=0.0, x0_list=[10.0, 100.0, 1000.0],
                               x_max=1e6, enforce_nonresonance=False)
    assert rep.max_product_ratio > 10.0
    assert rep.products == sorted(rep.products)


# ---------------------------------------------------------------------------
# non-embedding lower bound


def test_nonembedding_bound_certified(free_target_07):
    t = free_target_07
    piece = adversarial_potential(t, x0=20.0, x_max=2e3, eps=0.4)
    rep = nonembedding_check(t, piece, x0=20.0, x_max=2e3)
    assert rep.C_eps == pytest.approx(0.4, rel=1e-6)
    assert rep.min_margin >= np.log1p(-rep.tol)
    assert rep.l2_measured >= rep.l2_lower_bound
    assert not rep.square_summable
    assert rep.to_dict()["name"] == "nonembedding"


def test_nonembedding_rejects_large_envelope(free_target_07):
    t = free_target_07
    piece = adversarial_potential(t, x0=20.0, x_max=100.0, eps=0.4)
    with pytest.raises(HypothesisViolated):
        nonembedding_check(t, piece, x0=20.0, x_max=100.0, eps=0.6)


# ---------------------------------------------------------------------------
# L^2 tails


def _synthetic_track(own_starts, alpha):
    xs = np.linspace(own_starts[0], own_starts[-1], 4001)
    return TrackRecord(target_index=0, side=1, xs=xs,
                       ln_R=-alpha * (xs - xs[0]),
                       xi=np.zeros_like(xs), own_starts=list(own_starts),
                       started_at=own_starts[0])


def test_l2_tail_on_synthetic_geometric_track():
    # R^2 = exp(-2 alpha x) with equal cycles of length L gives exact
    # cycle ratio exp(-2 alpha L).
    alpha, L = 0.5, 4.0
    tr = _synthetic_track([10.0, 14.0, 18.0, 22.0, 26.0], alpha)
    rep = l2_tail_estimate(tr)
    assert rep.verdict
    expected = float(np.exp(-2.0 * alpha * L))
    assert rep.ratios == pytest.approx([expected] * 3, rel=1e-4)
    s0 = rep.cycle_sums[0]
    assert rep.cycle_sums == pytest.approx(
        [s0 * expected ** i for i in range(4)], rel=1e-4)


def test_l2_tail_flags_slow_decay():
    rep = l2_tail_estimate(_synthetic_track([10.0, 14.0, 18.0, 22.0], 0.05))
    assert not rep.verdict
    assert all(r > 0.5 for r in rep.ratios)


def test_l2_tail_needs_enough_cycles():
    with pytest.raises(InconclusiveTail):
        l2_tail_estimate(_synthetic_track([10.0, 14.0, 18.0], 0.5))


def test_track_targets_reproduces_schedule_tracks(small_pot, small_sched):
    tracks = track_targets(small_pot)
    assert set(tracks) == set(small_sched.tracks)
    for key, tr in tracks.items():
        ref = small_sched.tracks[key]
        assert tr.own_starts == ref.own_starts
        assert tr.started_at == ref.started_at
        assert tr.ln_R[-1] == pytest.approx(ref.ln_R[-1], abs=1e-6)


def test_tails_across_assembled_potential(small_pot):
    tracks = track_targets(small_pot)
    for key, tr in tracks.items():
        rep = l2_tail_estimate(tr)
        assert rep.verdict, f"track {key} tail ratios {rep.ratios}"
        assert all(r <= 0.5 for r in rep.ratios)


# ---------------------------------------------------------------------------
# report output


def test_report_files(tmp_path, free_target_07, long_piece):
    rep = decay_check(free_target_07, long_piece)
    jpath, cpath = tmp_path / "reports.json", tmp_path / "summary.csv"
    write_reports_json([rep], str(jpath))
    docs = json.loads(jpath.read_text())
    assert docs[0]["name"] == "decay"
    write_summary_csv([rep], str(cpath))
    lines = cpath.read_text().splitlines()
    assert lines[0] == "name,subject,metric,value"
    assert lines[1].startswith("decay,")
