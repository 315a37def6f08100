import numpy as np
import pytest
from scipy import linalg

from levent import gaussian, kernels, model, riccati
from levent.errors import ConfigError, ControllabilityError, ConvergenceError, InstabilityError
from levent.model import ModelConfig


def _filter_are_scipy(cfg):
    """Stationary filter covariance from scipy: A V + V A^T + N - 4 V C C^T V = 0."""
    A = model.drift_matrix(0.0, cfg)
    C = model.measurement_matrix(0.0, cfg)
    N = model.noise_matrix(0.0, cfg)
    return linalg.solve_continuous_are(A.T, 2 * C, N, np.eye(2))


def _filter_are_newton(cfg, iters=60):
    """Newton-Kleinman iteration built on Lyapunov solves only."""
    A = model.drift_matrix(0.0, cfg)
    C = model.measurement_matrix(0.0, cfg)
    N = model.noise_matrix(0.0, cfg)
    G = 4 * C @ C.T
    V = 10.0 * np.eye(4)
    for _ in range(iters):
        Ak = A - V @ G
        V_new = linalg.solve_continuous_lyapunov(Ak, -(N + V @ G @ V))
        if np.max(np.abs(V_new - V)) < 1e-15:
            break
        V = V_new
    return 0.5 * (V_new + V_new.T)


def _rel_fro(a, b):
    return np.linalg.norm(a - b) / np.linalg.norm(b)


def test_oracles_agree(static_cfg):
    assert _rel_fro(_filter_are_newton(static_cfg), _filter_are_scipy(static_cfg)) < 1e-10


def test_unmodulated_fixed_point_matches_are(static_cfg):
    sol = riccati.periodic_steady_state(static_cfg)
    target = _filter_are_newton(static_cfg)
    assert _rel_fro(sol.covs[0], target) < 1e-6
    # the periodic solution of an autonomous flow is constant
    assert np.max(np.abs(sol.covs - sol.covs[0])) < 1e-7


def test_fixed_point_is_stationary(static_cfg):
    V = _filter_are_newton(static_cfg)
    T = static_cfg.period
    _, covs = riccati.integrate_conditional_covariance(V, static_cfg, (0.0, 2 * T), T / 2000)
    assert np.max(np.abs(covs - V)) < 1e-10


def test_periodic_solution_repeats(base_cfg, steady_base):
    vc = steady_base.vc
    T = base_cfg.period
    _, covs = riccati.integrate_conditional_covariance(vc.covs[0], base_cfg, (0.0, T), vc.step)
    assert np.max(np.abs(covs[-1] - vc.covs[0])) < 1e-7
    assert np.max(np.abs(covs[:-1] - vc.covs)) < 1e-7


def test_conditional_covariance_physical(steady_base):
    nu = gaussian.min_symplectic_eigenvalue(steady_base.vc.covs)
    assert np.all(nu >= 0.5 - 1e-9)
    nu = gaussian.min_symplectic_eigenvalue(steady_base.v_u.covs)
    assert np.all(nu >= 0.5 - 1e-9)


def test_excess_noise_positive_semidefinite(steady_base):
    ev = np.linalg.eigvalsh(steady_base.v_ex.covs)
    assert ev.min() >= -1e-12


def test_rk4_order(base_cfg):
    A0, A1 = model.drift_parts(base_cfg)
    N0, N1 = model.noise_parts(base_cfg)
    G0, G1 = model.measurement_gain_parts(base_cfg)
    T = base_cfg.period

    def flow(n):
        X, bad = kernels.riccati_flow(gaussian.vacuum(), A0, A1, N0, N1, G0, G1,
                                      base_cfg.alpha, base_cfg.Omega, 0.0, 1.0, T / n, n)
        assert bad < 0
        return X

    ref = flow(2560)
    errs = [np.max(np.abs(flow(n) - ref)) for n in (20, 40, 80)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders > 3.7), orders


def test_lqr_matches_are_unmodulated(static_cfg):
    gains = riccati.backward_control_riccati(static_cfg)
    A = model.drift_matrix(0.0, static_cfg)
    B = model.feedback_matrix(static_cfg.strategy)
    P, Q = model.cost_matrices(static_cfg)
    S = linalg.solve_continuous_are(A, B, P, Q)
    assert _rel_fro(gains.sigma[0], S) < 1e-6
    np.testing.assert_allclose(gains.gains[0], np.linalg.solve(Q, B.T @ S), rtol=1e-6, atol=1e-9)


def test_excess_noise_matches_lyapunov_unmodulated(static_cfg, steady_static):
    vc = steady_static.vc.covs[0]
    A = model.drift_matrix(0.0, static_cfg)
    C = model.measurement_matrix(0.0, static_cfg)
    K = steady_static.gains.gains[0]
    M = A - steady_static.gains.B @ K
    S = 4 * vc @ C @ C.T @ vc
    target = linalg.solve_continuous_lyapunov(M, -S)
    assert _rel_fro(steady_static.v_ex.covs[0], target) < 1e-6


def test_lqr_gain_periodic(base_cfg, steady_base):
    g = steady_base.gains
    assert g.gains.shape == (len(steady_base.vc.times), 2, 4)
    # backward solution continues smoothly across the period boundary
    assert np.max(np.abs(g.gains[0] - g.gains[-1])) < 0.05 * np.max(np.abs(g.gains))


def test_stationary_gain_close_to_periodic_at_zero_modulation(static_cfg, steady_static):
    st = riccati.stationary_gain(static_cfg)
    np.testing.assert_allclose(st.gains[0], steady_static.gains.gains[0], rtol=1e-6, atol=1e-9)


def test_stability_probe_without_measurement():
    unstable = riccati.stability_probe(ModelConfig(eta=0.0))
    assert not unstable
    assert 0 < unstable.blowup_time < 200 * np.pi
    assert riccati.stability_probe(ModelConfig(eta=0.0, gamma=0.2))
    assert riccati.stability_probe(ModelConfig(eta=1.0))


def test_divergence_raises_instability():
    with pytest.raises(InstabilityError) as info:
        riccati.periodic_steady_state(ModelConfig(eta=0.0))
    assert info.value.time > 0


def test_secular_heating_is_instability():
    with pytest.raises(InstabilityError):
        riccati.periodic_steady_state(ModelConfig(alpha=0.0, eta=0.0))


def test_non_convergence_reported():
    with pytest.raises(ConvergenceError) as info:
        riccati.periodic_steady_state(ModelConfig(), max_periods=3)
    assert info.value.residual > 0


def test_uncontrollable_feedback_detected():
    cfg = ModelConfig(g=0.0, strategy="identical", charge_ratio=3.0)
    with pytest.raises(ControllabilityError):
        riccati.backward_control_riccati(cfg)
    B = np.array([[0.0], [1.0], [0.0], [1.0]])
    with pytest.raises(ControllabilityError):
        riccati.backward_control_riccati(ModelConfig(), B=B)


def test_period_grid():
    cfg = ModelConfig(Omega=2.0)
    T, n, h = riccati.period_grid(cfg)
    assert n == 2000 and n % 2 == 0 and h * n == pytest.approx(T)
    T, n, h = riccati.period_grid(ModelConfig(Omega=0.5))
    assert h <= riccati.MAX_DT
    with pytest.raises(ConfigError):
        riccati.period_grid(cfg, dt=0.1)
    with pytest.raises(ConfigError):
        riccati.period_grid(cfg, dt=T / 1001)


def test_unphysical_initial_state_rejected(base_cfg):
    from levent.errors import PhysicalityError
    with pytest.raises(PhysicalityError):
        riccati.integrate_conditional_covariance(0.1 * np.eye(4), base_cfg, (0, 1), 1e-3)
