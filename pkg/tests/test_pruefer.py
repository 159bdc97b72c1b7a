"""Modified Pruefer transform: round trips, evolution laws, dual paths."""

import numpy as np
import pytest

from diracembed import (
    IntegratorSpec,
    PrueferState,
    R_xi_rhs,
    R_xi_system,
    ZeroSolution,
    from_prufer,
    integrate,
    integrate_R_xi,
    perturbed_rhs,
    prufer_rhs,
    prufer_system,
    to_prufer,
    write_trajectory_csv,
    xi_rate,
)

RNG = np.random.default_rng(20240713)


def random_state(data, x, rng):
    eta = float(rng.uniform(0.0, 2.0 * np.pi))
    R = float(rng.uniform(0.2, 3.0))
    th1 = eta + float(data.gamma1_f(x))
    th2 = eta + float(data.gamma2_f(x))
    xi = 2.0 * th1 + float(data.Gamma2_f(x))
    return PrueferState(R=R, eta=eta, theta1=th1, theta2=th2, xi=xi)


# ---------------------------------------------------------------------------
# transform round trips


def test_round_trip_from_then_to(generic_data):
    data = generic_data
    for x in RNG.uniform(0.0, 5.0, 12):
        st = random_state(data, x, RNG)
        y = from_prufer(st, data, x)
        back = to_prufer(y, data, x, eta_prev=st.eta)
        assert back.R == pytest.approx(st.R, abs=1e-10 * st.R)
        assert back.eta == pytest.approx(st.eta, abs=1e-10)
        assert back.theta1 == pytest.approx(st.theta1, abs=1e-10)
        assert back.xi == pytest.approx(st.xi, abs=1e-10)


def test_round_trip_to_then_from(generic_data):
    data = generic_data
    for x in RNG.uniform(0.0, 5.0, 12):
        y = RNG.standard_normal(2)
        st = to_prufer(y, data, x)
        again = from_prufer(st, data, x)
        assert np.allclose(again, y, atol=1e-10)


def test_to_prufer_scaling_linearity(generic_data):
    data = generic_data
    y = np.array([0.4, -1.1])
    a = to_prufer(y, data, 0.37)
    b = to_prufer(2.0 * y, data, 0.37)
    assert b.R == pytest.approx(2.0 * a.R, rel=1e-12)
    assert b.eta == pytest.approx(a.eta, abs=1e-12)


def test_to_prufer_rejects_zero_solution(generic_data):
    with pytest.raises(ZeroSolution):
        to_prufer(np.zeros(2), generic_data, 1.0)


def test_unit_rho_in_the_free_frame(free_data):
    # y = Im(g) corresponds to rho = 1: R = 1 and eta on the 2*pi branch.
    data = free_data
    for x in (0.0, 0.3, 1.7):
        g1, g2 = data.g_eval(x)
        y = np.array([np.imag(g1), np.imag(g2)])
        st = to_prufer(y, data, x)
        assert st.R == pytest.approx(1.0, abs=1e-9)
        assert np.exp(1j * st.eta) == pytest.approx(1.0, abs=1e-9)


def test_eta_unwraps_against_previous_value(generic_data):
    data = generic_data
    y = np.array([0.9, 0.2])
    st = to_prufer(y, data, 0.5)
    shifted = to_prufer(y, data, 0.5, eta_prev=st.eta + 6.0 * np.pi)
    assert shifted.eta == pytest.approx(st.eta + 6.0 * np.pi, abs=1e-10)


def test_comparability_of_R_and_euclidean_norm(generic_data):
    data = generic_data
    hi = float(np.max(data.u + data.v))
    C = max(np.sqrt(hi), 2.0 * np.sqrt(hi) / abs(data.omega)) * 1.0000001
    for x in RNG.uniform(0.0, 3.0, 20):
        y = RNG.standard_normal(2)
        st = to_prufer(y, data, x)
        r = st.R / np.hypot(*y)
        assert 1.0 / C <= r <= C


# ---------------------------------------------------------------------------
# evolution laws


def test_rhs_equivalence_two_angle_vs_single_phase(generic_data):
    data = generic_data
    for _ in range(200):
        x = float(RNG.uniform(0.0, 4.0))
        th1 = float(RNG.uniform(-10.0, 10.0))
        th2 = th1 + float(data.gamma2_f(x) - data.gamma1_f(x))
        xi = 2.0 * th1 + float(data.Gamma2_f(x))
        V = float(RNG.uniform(-0.5, 0.5))
        rlog_pair, _ = R_xi_rhs(data, x, xi, V)
        rlog_triple, _, _ = prufer_rhs(data, x, th1, th2, V)
        assert rlog_pair == pytest.approx(rlog_triple, abs=1e-10)


def test_zero_potential_rates(generic_data):
    data = generic_data
    x = 1.234
    rlog, xip = R_xi_rhs(data, x, 0.77, 0.0)
    assert rlog == 0.0
    assert xip == pytest.approx(2.0 * data.k + data.delta_f.deriv(x), abs=1e-12)
    rlog3, t1p, t2p = prufer_rhs(data, x, 0.3, 0.9, 0.0)
    assert rlog3 == 0.0


def test_free_case_reduces_to_classical_pruefer(free_data):
    data = free_data
    lam = data.lam
    for _ in range(50):
        xi = float(RNG.uniform(-8.0, 8.0))
        V = float(RNG.uniform(-1.0, 1.0))
        rlog, xip = R_xi_rhs(data, 0.9, xi, V)
        assert rlog == pytest.approx(V * np.sin(xi), abs=1e-9)
        assert xip == pytest.approx(2.0 * lam + 2.0 * V * np.cos(xi), abs=1e-9)


def test_xi_rate_free_case(free_data):
    assert xi_rate(free_data) == pytest.approx(2.0 * free_data.k, abs=1e-12)


def test_prufer_flow_tracks_the_perturbed_system(generic_data):
    # Integrate the system and the polar triple side by side over [1, 100].
    data = generic_data
    sol = data.sol

    def V(x):
        return 0.2 * np.sin(2.6 * x) / (1.0 + 0.5 * x)

    x0, x1 = 1.0, 100.0
    y0 = np.array([0.8, -0.4])
    grid = np.linspace(x0, x1, 400)
    spec = IntegratorSpec(rel_tol=1e-10, abs_tol=1e-12)
    y_traj = integrate(perturbed_rhs(sol.p, sol.q, sol.lam, V),
                       x0, x1, y0, spec, t_eval=grid)
    st0 = to_prufer(y0, data, x0)
    z0 = np.array([np.log(st0.R), st0.theta1, st0.theta2])
    z_traj = integrate(prufer_system(data, V), x0, x1, z0, spec, t_eval=grid)
    eta_prev = st0.eta
    worst = 0.0
    for xg, yg, zg in zip(grid, y_traj.ys, z_traj.ys):
        st = to_prufer(yg, data, float(xg), eta_prev=eta_prev)
        eta_prev = st.eta
        worst = max(worst, abs(np.log(st.R) - zg[0]),
                    abs(st.theta1 - zg[1]), abs(st.theta2 - zg[2]))
    assert worst < 1e-6


# ---------------------------------------------------------------------------
# long-horizon integration


def test_integrate_R_xi_zero_potential_is_exact(free_data):
    data = free_data
    run = integrate_R_xi(data, lambda x: 0.0 * np.asarray(x), 5.0, 50.0, 1.0)
    assert np.all(run.ln_R == 0.0)
    assert run.ln_R_end == 0.0
    rate = xi_rate(data)
    assert np.allclose(run.xi, 1.0 + rate * (run.xs - 5.0), atol=1e-8)
    assert run.xs[0] == 5.0 and run.xs[-1] == 50.0


def test_integrate_R_xi_matches_coupled_solver(free_data):
    data = free_data

    def V(x):
        return 0.3 * np.sin(2.7 * np.asarray(x)) / (1.0 + np.asarray(x))

    x0, x1, xi0 = 10.0, 200.0, 0.6
    run = integrate_R_xi(data, V, x0, x1, xi0,
                         spec=IntegratorSpec(rel_tol=1e-10, abs_tol=1e-12))
    ref = integrate(R_xi_system(data, lambda x: float(V(x))), x0, x1,
                    np.array([0.0, xi0]),
                    IntegratorSpec(rel_tol=1e-11, abs_tol=1e-13),
                    t_eval=run.xs)
    assert abs(run.ln_R_end - ref.ys[-1, 0]) < 1e-6
    assert np.max(np.abs(run.ln_R - ref.ys[:, 0])) < 1e-6
    # xi samples pass through the Hermite reconstruction between accepted
    # solver nodes, so they carry interpolation-level error, not solver error
    assert np.max(np.abs(run.xi - ref.ys[:, 1])) < 1e-4


def test_integrate_R_xi_downward_anchors_at_the_right(free_data):
    data = free_data

    def V(x):
        return 0.1 * np.cos(1.3 * np.asarray(x)) / (1.0 + np.asarray(x))

    up = integrate_R_xi(data, V, 5.0, 80.0, 0.3, lnR0=0.25)
    down = integrate_R_xi(data, V, 80.0, 5.0, float(up.xi_at(80.0)),
                          lnR0=float(up.ln_R_end))
    assert down.xs[0] == 80.0 and down.xs[-1] == 5.0
    assert down.ln_R_end == pytest.approx(0.25, abs=1e-7)
    assert float(down.ln_R_at(40.0)) == pytest.approx(
        float(up.ln_R_at(40.0)), abs=1e-6)


def test_trajectory_csv_export(tmp_path, free_data):
    data = free_data
    run = integrate_R_xi(data, lambda x: 0.0 * np.asarray(x), 1.0, 30.0, 0.5)
    eta = (run.xi - run.xs * 0.0 - float(data.Gamma2_f(0.0))) / 2.0 \
        - data.gamma1_f(run.xs)
    path = tmp_path / "traj.csv"
    write_trajectory_csv(path, run.xs, np.exp(run.ln_R), eta,
                         eta + data.gamma1_f(run.xs),
                         eta + data.gamma2_f(run.xs), run.xi)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,R,ln_R,eta,theta1,theta2,xi"
    assert len(lines) == run.xs.size + 1
