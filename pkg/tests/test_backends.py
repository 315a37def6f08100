import os
import subprocess
import sys

import numpy as np
import pytest

from levent import _fallback, gaussian, kernels, model

compiled = pytest.importorskip("levent._kernels", reason="compiled extension not built")


def _coeffs(cfg):
    A0, A1 = model.drift_parts(cfg)
    N0, N1 = model.noise_parts(cfg)
    G0, G1 = model.measurement_gain_parts(cfg)
    return A0, A1, N0, N1, G0, G1


@pytest.mark.parametrize("tsign", [1.0, -1.0])
def test_riccati_flow_agrees(base_cfg, tsign):
    args = (gaussian.vacuum(), *_coeffs(base_cfg), base_cfg.alpha, base_cfg.Omega, 0.3, tsign, 1e-3, 200)
    sa, sb = np.empty((200, 4, 4)), np.empty((200, 4, 4))
    xa, ba = compiled.riccati_flow(*args, sa)
    xb, bb = _fallback.riccati_flow(*args, sb)
    assert ba == bb == -1
    np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(sa, sb, rtol=1e-12, atol=1e-14)


def test_blowup_step_agrees(base_cfg):
    cfg = model.ModelConfig(eta=0.0)
    args = (gaussian.vacuum(), *_coeffs(cfg), cfg.alpha, cfg.Omega, 0.0, 1.0, 5e-3, 40000, None, 1e4)
    assert compiled.riccati_flow(*args)[1] == _fallback.riccati_flow(*args)[1] > 0


def test_lyapunov_agrees(steady_base, base_cfg):
    from levent.riccati import closed_loop_coefficients
    M, S = closed_loop_coefficients(steady_base.vc, steady_base.gains, base_cfg)
    M, S = M[:101].copy(), S[:101].copy()
    X0 = np.zeros((4, 4))
    xa, _ = compiled.lyapunov_sampled(X0, M, S, steady_base.vc.step, 50)
    xb, _ = _fallback.lyapunov_sampled(X0, M, S, steady_base.vc.step, 50)
    np.testing.assert_allclose(xa, xb, rtol=1e-12, atol=1e-15)


def test_em_agrees(rng):
    n_grid, n = 16, 40
    M = rng.normal(size=(n_grid, 4, 4)) * 0.1
    L = rng.normal(size=(n_grid, 4, 2))
    R = rng.normal(size=(n_grid, 2, 4))
    dW = rng.normal(size=(n, 2)) * 0.03
    out = []
    for k in (compiled, _fallback):
        means, dy = np.empty((n // 4 + 1, 4)), np.empty((n // 4, 2))
        x, bad = k.em_closed_loop(np.ones(4), M, L, R, dW, 1e-3, 5, 4, means, dy)
        out.append((x, means, dy, bad))
    np.testing.assert_allclose(out[0][0], out[1][0], rtol=1e-13)
    np.testing.assert_allclose(out[0][1], out[1][1], rtol=1e-13)
    np.testing.assert_allclose(out[0][2], out[1][2], rtol=1e-13, atol=1e-16)
    assert out[0][3] == out[1][3] == -1


def test_environment_forces_fallback():
    env = dict(os.environ, LEVENT_PURE_PYTHON="1")
    res = subprocess.run([sys.executable, "-c", "import levent.kernels as k; print(k.BACKEND)"],
                         env=env, capture_output=True, text=True, check=True)
    assert res.stdout.strip() == "python"
    assert kernels.BACKEND == "cython"
